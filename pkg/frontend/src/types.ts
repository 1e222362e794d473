// Wire types for the design service. Structures always travel as
// {elements, positions}; bond lists are computed server side and arrive
// next to the structure they describe, never inside it.

export type Vec3 = [number, number, number];

export interface StructurePayload {
    elements: string[];
    positions: Vec3[];
}

export interface CandidatePayload {
    structure: StructurePayload;
    bonds: number[][] | null;
    valid: boolean;
    reason: string | null;
    shape_point: [number, number] | null;
    nfe: number;
}

export interface SessionPayload {
    id: string;
    seed: number;
    scaffold: StructurePayload | null;
    scaffold_bonds: number[][] | null;
    prior: Record<string, unknown> | null;
    gallery: CandidatePayload[];
    history_depth: number;
    samples_started: number;
}

export interface JobPayload {
    id: string;
    session_id: string;
    status: 'pending' | 'running' | 'done' | 'error';
    error?: string;
    result?: { candidates: CandidatePayload[] };
}

export interface ErrorPayload {
    code: string;
    message: string;
    field?: string;
}

/** Body of PUT /sessions/{id}/prior. Exactly one of covariance/named. */
export interface PriorSpecBody {
    elements: string[];
    center?: Vec3;
    covariance?: number[][];
    named?: string;
    scale?: number;
    sigma_max?: number;
}

export interface SampleBody {
    count: number;
    steps?: number;
    seed?: number;
}

export interface AcceptBody {
    index: number;
    remove?: number[];
}
