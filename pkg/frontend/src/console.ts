import { ApiError, ServiceApi } from './api.js';
import { CameraPose, defaultCamera } from './canvas.js';
import {
    GizmoError,
    PriorGizmo,
    defaultGizmo,
    gizmoEllipsoid,
    gizmoToSpec,
} from './gizmo.js';
import { JobFailure, JobPoller } from './poll.js';
import { Scene, SceneError, buildScene } from './scene.js';
import type { SampleBody, SessionPayload, Vec3 } from './types.js';

/** Inline validation message pinned to one gizmo control. */
export interface FieldError {
    field: string | null;
    message: string;
}

/**
 * Everything the page renders from. The console owns this state; the
 * DOM layer only reads it and calls methods. Structures are whatever
 * the service last returned, never locally edited geometry.
 */
export interface ViewState {
    camera: CameraPose;
    sessionId: string | null;
    session: SessionPayload | null;
    gizmo: PriorGizmo;
    gallerySelection: number | null;
    showPriorEllipsoid: boolean;
    showForcesTrail: boolean;
    busy: boolean;
    jobNote: string | null;
    banner: string | null;
    fieldError: FieldError | null;
    warnings: string[];
    canRetry: boolean;
}

export class DesignConsole {
    readonly state: ViewState;
    private readonly poller: JobPoller;
    private readonly listeners = new Set<() => void>();
    private lastSample: SampleBody | null = null;

    constructor(private readonly api: ServiceApi, pollIntervalMs?: number) {
        this.poller = new JobPoller(api, pollIntervalMs);
        this.state = {
            camera: defaultCamera(),
            sessionId: null,
            session: null,
            gizmo: defaultGizmo(),
            gallerySelection: null,
            showPriorEllipsoid: true,
            showForcesTrail: false,
            busy: false,
            jobNote: null,
            banner: null,
            fieldError: null,
            warnings: [],
            canRetry: false,
        };
    }

    subscribe(listener: () => void): () => void {
        this.listeners.add(listener);
        return () => this.listeners.delete(listener);
    }

    private emit(): void {
        for (const listener of this.listeners) {
            listener();
        }
    }

    private fail(err: unknown): never {
        if (err instanceof ApiError && err.field !== undefined) {
            this.state.fieldError = { field: err.field, message: err.message };
        } else if (err instanceof GizmoError) {
            this.state.fieldError = { field: null, message: err.message };
        } else {
            this.state.banner = err instanceof Error ? err.message : String(err);
        }
        this.emit();
        throw err;
    }

    private adopt(session: SessionPayload): void {
        this.state.session = session;
        this.state.sessionId = session.id;
        if (
            this.state.gallerySelection !== null &&
            this.state.gallerySelection >= session.gallery.length
        ) {
            this.state.gallerySelection = null;
        }
        this.emit();
    }

    dismissBanner(): void {
        this.state.banner = null;
        this.state.canRetry = false;
        this.emit();
    }

    updateGizmo(next: PriorGizmo): void {
        this.state.gizmo = next;
        this.state.fieldError = null;
        this.emit(); // the ellipsoid preview follows every edit live
    }

    setCamera(camera: CameraPose): void {
        this.state.camera = camera;
        this.emit();
    }

    setDisplay(options: { ellipsoid?: boolean; trail?: boolean }): void {
        if (options.ellipsoid !== undefined) {
            this.state.showPriorEllipsoid = options.ellipsoid;
        }
        if (options.trail !== undefined) {
            this.state.showForcesTrail = options.trail;
        }
        this.emit();
    }

    select(index: number | null): void {
        this.state.gallerySelection = index;
        this.emit();
    }

    async newSession(seed?: number): Promise<void> {
        try {
            const session = await this.api.createSession(seed);
            this.state.gallerySelection = null;
            this.state.warnings = [];
            this.adopt(session);
        } catch (err) {
            this.fail(err);
        }
    }

    async refresh(): Promise<void> {
        if (this.state.sessionId === null) {
            return;
        }
        try {
            this.adopt(await this.api.getSession(this.state.sessionId));
        } catch (err) {
            this.fail(err);
        }
    }

    /** Serialize the gizmo and submit it as the session prior. */
    async placePrior(): Promise<void> {
        if (this.state.sessionId === null) {
            this.fail(new GizmoError('create a session first'));
        }
        try {
            const spec = gizmoToSpec(this.state.gizmo);
            this.adopt(await this.api.putPrior(this.state.sessionId!, spec));
        } catch (err) {
            this.fail(err);
        }
    }

    /**
     * Start a sampling batch and poll it to completion. One job per
     * session: while busy, further requests are rejected before any
     * network call happens.
     */
    async requestSamples(count: number, steps?: number): Promise<void> {
        if (this.poller.busy || this.state.busy) {
            throw new JobFailure('a sampling job is already in flight');
        }
        const body: SampleBody = steps === undefined ? { count } : { count, steps };
        this.lastSample = body;
        await this.runSample(body);
    }

    /** Re-submit the last batch after a failure. */
    async retrySample(): Promise<void> {
        if (this.lastSample === null) {
            throw new JobFailure('nothing to retry');
        }
        this.dismissBanner();
        await this.runSample(this.lastSample);
    }

    private async runSample(body: SampleBody): Promise<void> {
        this.state.busy = true;
        this.state.jobNote = 'submitting...';
        this.emit();
        try {
            const job = await this.api.startSample(this.state.sessionId!, body);
            this.state.jobNote = `job ${job.id} running`;
            this.emit();
            await this.poller.watch(job.id, (tick) => {
                this.state.jobNote = `job ${tick.id} ${tick.status}`;
                this.emit();
            });
            await this.refresh(); // gallery now holds the candidates
            this.state.gallerySelection = this.state.session!.gallery.length > 0 ? 0 : null;
        } catch (err) {
            this.state.canRetry = true;
            this.fail(err);
        } finally {
            this.state.busy = false;
            this.state.jobNote = null;
            this.emit();
        }
    }

    async acceptCandidate(index: number, remove: number[] = []): Promise<void> {
        if (this.state.sessionId === null) {
            this.fail(new GizmoError('no session'));
        }
        try {
            const payload = await this.api.accept(this.state.sessionId!, { index, remove });
            // keep state.session shaped exactly like the GET resource
            const { warnings, ...session } = payload;
            this.state.warnings = warnings ?? [];
            this.state.gallerySelection = null;
            this.adopt(session);
        } catch (err) {
            this.fail(err);
        }
    }

    async undoStep(): Promise<void> {
        if (this.state.sessionId === null) {
            this.fail(new GizmoError('no session'));
        }
        try {
            this.adopt(await this.api.undo(this.state.sessionId!));
        } catch (err) {
            this.fail(err);
        }
    }

    /**
     * Scene for the main viewport: the current scaffold (every atom
     * tinted as scaffold) plus the prior preview ellipsoid. A malformed
     * payload surfaces as the error banner and an empty scene rather
     * than a broken canvas.
     */
    scaffoldScene(): Scene {
        const session = this.state.session;
        const ellipsoid = this.state.showPriorEllipsoid
            ? gizmoEllipsoid(this.state.gizmo)
            : null;
        try {
            return buildScene(session?.scaffold ?? null, session?.scaffold_bonds ?? null, {
                scaffoldCount: session?.scaffold?.elements.length ?? 0,
                ellipsoid,
            });
        } catch (err) {
            if (err instanceof SceneError) {
                this.state.banner = err.message;
                this.emit();
                return { spheres: [], sticks: [], rings: [] };
            }
            throw err;
        }
    }

    /** Scene for one gallery candidate; scaffold rows keep their tint. */
    candidateScene(index: number): Scene {
        const session = this.state.session;
        const candidate = session?.gallery[index];
        if (!session || !candidate) {
            return { spheres: [], sticks: [], rings: [] };
        }
        try {
            return buildScene(candidate.structure, candidate.bonds, {
                scaffoldCount: session.scaffold?.elements.length ?? 0,
            });
        } catch (err) {
            if (err instanceof SceneError) {
                this.state.banner = err.message;
                this.emit();
                return { spheres: [], sticks: [], rings: [] };
            }
            throw err;
        }
    }

    /**
     * Optional overlay when "show forces trail" is on: segments from
     * the prior center toward each free atom of the selected candidate,
     * a hint of where the sampler pulled atoms out of the blob. Pure
     * display sugar computed from data already on hand.
     */
    trailSegments(): Array<{ a: Vec3; b: Vec3 }> {
        const { session, gallerySelection, showForcesTrail, gizmo } = this.state;
        if (!showForcesTrail || session === null || gallerySelection === null) {
            return [];
        }
        const candidate = session.gallery[gallerySelection];
        if (!candidate) {
            return [];
        }
        const origin: Vec3 = gizmo.center ?? [0, 0, 0];
        const scaffoldCount = session.scaffold?.elements.length ?? 0;
        return candidate.structure.positions
            .slice(scaffoldCount)
            .map((p) => ({ a: origin, b: p }));
    }
}
