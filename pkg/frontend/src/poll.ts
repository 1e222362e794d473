import type { ServiceApi } from './api.js';
import type { JobPayload } from './types.js';

export const POLL_INTERVAL_MS = 250;

export class JobFailure extends Error {}

function delay(ms: number): Promise<void> {
    return new Promise((resolve) => setTimeout(resolve, ms));
}

/**
 * Polls one sampling job until it finishes. A poller instance watches
 * at most one job at a time; the console keeps one per session, which
 * is what enforces the single-in-flight rule.
 */
export class JobPoller {
    private active = false;
    private cancelled = false;

    constructor(
        private readonly api: ServiceApi,
        private readonly intervalMs: number = POLL_INTERVAL_MS,
    ) {}

    get busy(): boolean {
        return this.active;
    }

    cancel(): void {
        if (this.active) {
            this.cancelled = true;
        }
    }

    async watch(jobId: string, onTick?: (job: JobPayload) => void): Promise<JobPayload> {
        if (this.active) {
            throw new JobFailure('a sampling job is already in flight');
        }
        this.active = true;
        this.cancelled = false;
        try {
            for (;;) {
                const job = await this.api.getJob(jobId);
                if (job.status === 'done') {
                    return job;
                }
                if (job.status === 'error') {
                    throw new JobFailure(job.error ?? 'sampling failed');
                }
                if (onTick) {
                    onTick(job);
                }
                await delay(this.intervalMs);
                if (this.cancelled) {
                    throw new JobFailure('cancelled');
                }
            }
        } finally {
            this.active = false;
            this.cancelled = false;
        }
    }
}
