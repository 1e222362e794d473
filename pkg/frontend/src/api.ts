import type {
    AcceptBody,
    ErrorPayload,
    JobPayload,
    PriorSpecBody,
    SampleBody,
    SessionPayload,
} from './types.js';

export class ApiError extends Error {
    readonly code: string;
    readonly status: number;
    readonly field?: string;

    constructor(status: number, body: ErrorPayload) {
        super(body.message);
        this.name = 'ApiError';
        this.status = status;
        this.code = body.code;
        this.field = body.field;
    }
}

/** The slice of the service the console talks to. */
export interface ServiceApi {
    health(): Promise<{ status: string; provider: string }>;
    createSession(seed?: number): Promise<SessionPayload>;
    getSession(id: string): Promise<SessionPayload>;
    deleteSession(id: string): Promise<void>;
    putPrior(id: string, spec: PriorSpecBody): Promise<SessionPayload>;
    startSample(id: string, body: SampleBody): Promise<{ id: string; status: string }>;
    getJob(id: string): Promise<JobPayload>;
    accept(id: string, body: AcceptBody): Promise<SessionPayload & { warnings: string[] }>;
    undo(id: string): Promise<SessionPayload>;
}

async function unwrap(response: Response): Promise<any> {
    if (response.ok) {
        return response.status === 204 ? null : response.json();
    }
    let body: ErrorPayload;
    try {
        body = await response.json();
    } catch {
        body = { code: 'transport', message: `HTTP ${response.status}` };
    }
    throw new ApiError(response.status, body);
}

export class ApiClient implements ServiceApi {
    constructor(readonly base: string) {}

    private async call(method: string, path: string, body?: unknown): Promise<any> {
        const init: RequestInit = { method, headers: {} };
        if (body !== undefined) {
            init.headers = { 'content-type': 'application/json' };
            init.body = JSON.stringify(body);
        }
        return unwrap(await fetch(this.base + path, init));
    }

    health() {
        return this.call('GET', '/health');
    }

    createSession(seed?: number) {
        return this.call('POST', '/sessions', seed === undefined ? {} : { seed });
    }

    getSession(id: string) {
        return this.call('GET', `/sessions/${id}`);
    }

    async deleteSession(id: string) {
        await this.call('DELETE', `/sessions/${id}`);
    }

    putPrior(id: string, spec: PriorSpecBody) {
        return this.call('PUT', `/sessions/${id}/prior`, spec);
    }

    async startSample(id: string, body: SampleBody) {
        const data = await this.call('POST', `/sessions/${id}/sample`, body);
        return data.job;
    }

    getJob(id: string) {
        return this.call('GET', `/jobs/${id}`);
    }

    accept(id: string, body: AcceptBody) {
        return this.call('POST', `/sessions/${id}/accept`, body);
    }

    undo(id: string) {
        return this.call('POST', `/sessions/${id}/undo`);
    }
}
