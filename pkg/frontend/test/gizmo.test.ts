import { describe, expect, it } from 'vitest';
import {
    GizmoError,
    NAMED_SHAPES,
    defaultGizmo,
    gizmoEllipsoid,
    gizmoToSpec,
    previewVariances,
    specToGizmo,
    validateGizmo,
    withCenter,
    withCholEntry,
    withCovariance,
    withElements,
    withNamedPreset,
} from '../src/gizmo.js';
import { CholVec, cholToCov, covToChol, eigenSym3 } from '../src/mat3.js';
import type { PriorSpecBody } from '../src/types.js';

// deterministic pseudo-random stream for slider fuzzing
function lcg(seed: number): () => number {
    let s = seed >>> 0;
    return () => {
        s = (s * 1664525 + 1013904223) >>> 0;
        return s / 2 ** 32;
    };
}

describe('cholesky slider matrix', () => {
    it('decodes every slider position to a positive definite matrix', () => {
        const rand = lcg(7);
        for (let trial = 0; trial < 500; trial++) {
            const vec = Array.from({ length: 6 }, () => (rand() - 0.5) * 5) as CholVec;
            const cov = cholToCov(vec);
            expect(cov[0][1]).toBe(cov[1][0]);
            expect(cov[0][2]).toBe(cov[2][0]);
            expect(cov[1][2]).toBe(cov[2][1]);
            const eig = eigenSym3(cov);
            for (const lam of eig.values) {
                expect(lam).toBeGreaterThan(0);
            }
        }
    });

    it('recovers slider values from a decoded matrix', () => {
        const rand = lcg(11);
        for (let trial = 0; trial < 200; trial++) {
            const vec = Array.from({ length: 6 }, () => (rand() - 0.5) * 4) as CholVec;
            const back = covToChol(cholToCov(vec));
            for (let i = 0; i < 6; i++) {
                expect(Math.abs(back[i] - vec[i])).toBeLessThan(1e-9);
            }
        }
    });

    it('rejects matrices that are not positive definite', () => {
        expect(() =>
            covToChol([
                [1, 0, 0],
                [0, -2, 0],
                [0, 0, 1],
            ]),
        ).toThrow();
    });
});

describe('spec round-trip', () => {
    it('named prior specs survive spec -> gizmo -> spec unchanged', () => {
        const spec: PriorSpecBody = {
            elements: ['C', 'H', 'H', 'H', 'H'],
            named: 'rod',
            scale: 6.0,
        };
        expect(gizmoToSpec(specToGizmo(spec))).toEqual(spec);

        const withExtras: PriorSpecBody = {
            elements: ['N', 'O'],
            named: 'disc',
            scale: 4.5,
            center: [1.25, -0.5, 3],
            sigma_max: 12,
        };
        expect(gizmoToSpec(specToGizmo(withExtras))).toEqual(withExtras);
    });

    it('covariance specs are re-serialized bit for bit', () => {
        // awkward float values on purpose: the gizmo must keep the
        // loaded matrix as the authority rather than re-deriving it
        // from slider positions
        const spec: PriorSpecBody = {
            elements: ['C', 'C'],
            covariance: [
                [2.0000000000000004, 0.30000000000000004, -0.1],
                [0.30000000000000004, 1.1, 0.2],
                [-0.1, 0.2, 0.7000000000000001],
            ],
        };
        const roundTripped = gizmoToSpec(specToGizmo(spec));
        expect(roundTripped).toEqual(spec);
        expect(JSON.stringify(roundTripped)).toBe(JSON.stringify(spec));
    });

    it('moving a slider regenerates the covariance from the sliders', () => {
        const spec: PriorSpecBody = {
            elements: ['C'],
            covariance: [
                [2, 0, 0],
                [0, 1, 0],
                [0, 0, 0.5],
            ],
        };
        const gizmo = specToGizmo(spec);
        const moved = withCholEntry(gizmo, 0, gizmo.chol[0] + 0.25);
        const out = gizmoToSpec(moved);
        expect(out.covariance![0][0]).toBeCloseTo(2 * Math.exp(0.5), 9);
        expect(out.covariance![1][1]).toBeCloseTo(1, 9);
    });
});

describe('presets and validation', () => {
    it('the rod preset carries the documented variance ratio', () => {
        expect(NAMED_SHAPES.rod).toEqual([0.9, 0.05, 0.05]);
        const gizmo = withNamedPreset(defaultGizmo(), 'rod', 6.0);
        const spec = gizmoToSpec(gizmo);
        expect(spec.named).toBe('rod');
        expect(spec.scale).toBe(6.0);
        // preview variances follow the server rule: ratio times trace
        const lam = previewVariances(NAMED_SHAPES.rod, 6.0);
        expect(lam[0]).toBeCloseTo(5.4, 12);
        expect(lam[1]).toBeCloseTo(0.3, 12);
        expect(lam[2]).toBeCloseTo(0.3, 12);
    });

    it('the disc preset floors its zero axis to stay positive definite', () => {
        const lam = previewVariances(NAMED_SHAPES.disc, 10.0);
        expect(lam[2]).toBeGreaterThan(0);
        expect(lam[0] + lam[1] + lam[2]).toBeCloseTo(10.0, 9);
    });

    it('blocks an empty atom list client side', () => {
        const gizmo = withElements(defaultGizmo(), []);
        expect(validateGizmo(gizmo)).toMatch(/at least one/);
        expect(() => gizmoToSpec(gizmo)).toThrow(GizmoError);
    });

    it('rejects unknown presets and garbled element symbols', () => {
        expect(() => withNamedPreset(defaultGizmo(), 'banana')).toThrow(GizmoError);
        const gizmo = withElements(defaultGizmo(), ['C', 'h2o']);
        expect(validateGizmo(gizmo)).not.toBeNull();
    });
});

describe('ellipsoid preview', () => {
    it('uses sqrt variances as radii for a named preset', () => {
        const gizmo = withNamedPreset(defaultGizmo(), 'rod', 6.0);
        const spec = gizmoEllipsoid(gizmo);
        expect(spec.radii[0]).toBeCloseTo(Math.sqrt(5.4), 9);
        expect(spec.radii[1]).toBeCloseTo(Math.sqrt(0.3), 9);
        expect(spec.center).toEqual([0, 0, 0]);
    });

    it('follows the gizmo center and custom covariance', () => {
        let gizmo = withCovariance(defaultGizmo(), [
            [4, 0, 0],
            [0, 1, 0],
            [0, 0, 0.25],
        ]);
        gizmo = withCenter(gizmo, [1, 2, 3]);
        const spec = gizmoEllipsoid(gizmo);
        expect(spec.center).toEqual([1, 2, 3]);
        expect(spec.radii[0]).toBeCloseTo(2, 9);
        expect(spec.radii[2]).toBeCloseTo(0.5, 9);
    });

    it('diagonalizes a rotated covariance for the preview axes', () => {
        // covariance with eigenvalues 9 and 1 in the xy plane, rotated 30 degrees
        const c = Math.cos(Math.PI / 6);
        const s = Math.sin(Math.PI / 6);
        const cov = [
            [9 * c * c + 1 * s * s, (9 - 1) * c * s, 0],
            [(9 - 1) * c * s, 9 * s * s + 1 * c * c, 0],
            [0, 0, 4],
        ];
        const gizmo = withCovariance(defaultGizmo(), cov);
        const spec = gizmoEllipsoid(gizmo);
        expect(spec.radii[0]).toBeCloseTo(3, 6);
        expect(spec.radii[1]).toBeCloseTo(2, 6);
        expect(spec.radii[2]).toBeCloseTo(1, 6);
    });
});
