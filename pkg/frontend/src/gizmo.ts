import { CholVec, Mat3, cholToCov, covToChol, eigenSym3, isSymmetric } from './mat3.js';
import type { PriorSpecBody, Vec3 } from './types.js';

// Relative principal variances of the named presets, largest first.
// These mirror the service's named targets and are used only to draw
// the preview ellipsoid; the resolved absolute target always comes from
// the service when a named spec is submitted.
export const NAMED_SHAPES: Record<string, [number, number, number]> = {
    rod: [0.9, 0.05, 0.05],
    sphere: [1 / 3, 1 / 3, 1 / 3],
    disc: [0.5, 0.5, 0.0],
};

export class GizmoError extends Error {}

/**
 * Editor state for one prior blob. Two modes:
 *
 * - 'named': a preset shape plus a trace slider; serialized as
 *   {named, scale} so the service resolves the absolute variances.
 * - 'custom': six Cholesky-vector sliders. The decoded matrix is
 *   positive definite for every slider position because the diagonal
 *   entries live in log space.
 *
 * In custom mode the gizmo keeps the full covariance matrix as the
 * authority and treats the sliders as a derived view. A spec loaded
 * from the service is therefore re-serialized bit for bit as long as
 * no slider has moved, which is what keeps round-trips exact.
 */
export interface PriorGizmo {
    center: Vec3 | null;
    elements: string[];
    mode: 'named' | 'custom';
    named: string;
    scale: number;
    chol: CholVec;
    covariance: Mat3 | null;
    sigmaMax: number | null;
}

export function defaultGizmo(): PriorGizmo {
    return {
        center: null,
        elements: ['C', 'H', 'H', 'H', 'H'],
        mode: 'named',
        named: 'sphere',
        scale: 6.0,
        chol: [0, 0, 0, 0, 0, 0],
        covariance: null,
        sigmaMax: null,
    };
}

export function withNamedPreset(gizmo: PriorGizmo, named: string, scale?: number): PriorGizmo {
    if (!(named in NAMED_SHAPES)) {
        throw new GizmoError(`unknown preset ${named}`);
    }
    return { ...gizmo, mode: 'named', named, scale: scale ?? gizmo.scale, covariance: null };
}

/** Move one slider; the covariance is regenerated from the sliders. */
export function withCholEntry(gizmo: PriorGizmo, index: number, value: number): PriorGizmo {
    if (index < 0 || index > 5 || !Number.isFinite(value)) {
        throw new GizmoError('bad slider update');
    }
    const chol = gizmo.chol.slice() as CholVec;
    chol[index] = value;
    return { ...gizmo, mode: 'custom', chol, covariance: cholToCov(chol) };
}

/** Adopt a full covariance (e.g. from a loaded spec), kept verbatim. */
export function withCovariance(gizmo: PriorGizmo, covariance: Mat3): PriorGizmo {
    if (!isSymmetric(covariance)) {
        throw new GizmoError('covariance must be a symmetric 3x3 matrix');
    }
    const chol = covToChol(covariance); // also proves positive definiteness
    return {
        ...gizmo,
        mode: 'custom',
        chol,
        covariance: covariance.map((row) => row.slice()),
    };
}

export function withCenter(gizmo: PriorGizmo, center: Vec3 | null): PriorGizmo {
    return { ...gizmo, center: center === null ? null : ([...center] as Vec3) };
}

export function withElements(gizmo: PriorGizmo, elements: string[]): PriorGizmo {
    return { ...gizmo, elements: elements.slice() };
}

/** null when the gizmo can be submitted, else a message for the UI. */
export function validateGizmo(gizmo: PriorGizmo): string | null {
    if (gizmo.elements.length === 0) {
        return 'the prior needs at least one free atom';
    }
    if (gizmo.elements.some((e) => !/^[A-Z][a-z]?$/.test(e))) {
        return 'element symbols look wrong';
    }
    if (gizmo.mode === 'named' && !(gizmo.scale > 0)) {
        return 'scale must be positive';
    }
    return null;
}

export function gizmoToSpec(gizmo: PriorGizmo): PriorSpecBody {
    const problem = validateGizmo(gizmo);
    if (problem !== null) {
        throw new GizmoError(problem);
    }
    const spec: PriorSpecBody = { elements: gizmo.elements.slice() };
    if (gizmo.center !== null) {
        spec.center = [...gizmo.center] as Vec3;
    }
    if (gizmo.mode === 'named') {
        spec.named = gizmo.named;
        spec.scale = gizmo.scale;
    } else {
        if (gizmo.covariance === null) {
            throw new GizmoError('custom mode without a covariance');
        }
        spec.covariance = gizmo.covariance.map((row) => row.slice());
    }
    if (gizmo.sigmaMax !== null) {
        spec.sigma_max = gizmo.sigmaMax;
    }
    return spec;
}

export function specToGizmo(spec: PriorSpecBody): PriorGizmo {
    const gizmo = defaultGizmo();
    gizmo.elements = spec.elements.slice();
    gizmo.center = spec.center === undefined ? null : ([...spec.center] as Vec3);
    gizmo.sigmaMax = spec.sigma_max === undefined ? null : spec.sigma_max;
    if (spec.covariance !== undefined) {
        return withCovariance(gizmo, spec.covariance);
    }
    if (spec.named !== undefined) {
        return withNamedPreset(gizmo, spec.named, spec.scale);
    }
    // neither named nor covariance: the service falls back to an
    // isotropic prior; represent that as the sphere preset
    gizmo.mode = 'named';
    gizmo.named = 'sphere';
    return gizmo;
}

/** Absolute principal variances for preview, mirroring the server rule. */
export function previewVariances(relative: [number, number, number], trace: number): Vec3 {
    const floor = 1e-4;
    const total = relative[0] + relative[1] + relative[2];
    let rel = relative.map((r) => Math.max(r / total, floor));
    const norm = rel[0] + rel[1] + rel[2];
    rel = rel.map((r) => r / norm).sort((a, b) => b - a);
    return [rel[0] * trace, rel[1] * trace, rel[2] * trace];
}

export interface EllipsoidSpec {
    center: Vec3;
    radii: Vec3; // sqrt of principal variances: the 1-sigma surface
    axes: [number[], number[], number[]];
}

export function gizmoEllipsoid(gizmo: PriorGizmo): EllipsoidSpec {
    const center: Vec3 = gizmo.center === null ? [0, 0, 0] : gizmo.center;
    let sigma: Mat3;
    if (gizmo.mode === 'named') {
        const lam = previewVariances(
            NAMED_SHAPES[gizmo.named] ?? NAMED_SHAPES.sphere,
            gizmo.scale,
        );
        sigma = [
            [lam[0], 0, 0],
            [0, lam[1], 0],
            [0, 0, lam[2]],
        ];
    } else {
        sigma = gizmo.covariance ?? cholToCov(gizmo.chol);
    }
    const eig = eigenSym3(sigma);
    const radii = eig.values.map((v) => Math.sqrt(Math.max(v, 0))) as Vec3;
    return { center, radii, axes: eig.vectors };
}
