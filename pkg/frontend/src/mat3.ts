// Small dense 3x3 helpers for the gizmo and the renderer. Matrices are
// number[][] row major. Nothing here touches structures coming from the
// service; this is display and prior-spec math only.

export type Mat3 = number[][];

/**
 * Unconstrained 6-vector encoding of a positive-definite covariance:
 * lower-Cholesky entries row major with the diagonal logged,
 * (log L11, L21, log L22, L31, L32, log L33). Any real vector decodes
 * to a valid covariance, which is what makes sliders safe to drag.
 */
export type CholVec = [number, number, number, number, number, number];

const LOG_SLOTS = [0, 2, 5];

export function cholToCov(vec: CholVec): Mat3 {
    const e = vec.slice();
    for (const k of LOG_SLOTS) {
        e[k] = Math.exp(e[k]);
    }
    const l = [
        [e[0], 0, 0],
        [e[1], e[2], 0],
        [e[3], e[4], e[5]],
    ];
    const cov: Mat3 = [
        [0, 0, 0],
        [0, 0, 0],
        [0, 0, 0],
    ];
    for (let i = 0; i < 3; i++) {
        for (let j = 0; j < 3; j++) {
            let s = 0;
            for (let k = 0; k < 3; k++) {
                s += l[i][k] * l[j][k];
            }
            cov[i][j] = s;
        }
    }
    return cov;
}

/** Inverse of cholToCov up to round-off. Throws when cov is not PD. */
export function covToChol(cov: Mat3): CholVec {
    const l = [
        [0, 0, 0],
        [0, 0, 0],
        [0, 0, 0],
    ];
    for (let i = 0; i < 3; i++) {
        for (let j = 0; j <= i; j++) {
            let s = cov[i][j];
            for (let k = 0; k < j; k++) {
                s -= l[i][k] * l[j][k];
            }
            if (i === j) {
                if (s <= 0) {
                    throw new Error('covariance must be positive definite');
                }
                l[i][i] = Math.sqrt(s);
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    return [
        Math.log(l[0][0]),
        l[1][0],
        Math.log(l[1][1]),
        l[2][0],
        l[2][1],
        Math.log(l[2][2]),
    ];
}

export function isSymmetric(m: Mat3, tol = 1e-8): boolean {
    return (
        m.length === 3 &&
        m.every((row) => row.length === 3) &&
        Math.abs(m[0][1] - m[1][0]) <= tol &&
        Math.abs(m[0][2] - m[2][0]) <= tol &&
        Math.abs(m[1][2] - m[2][1]) <= tol
    );
}

export interface EigenSym3 {
    values: [number, number, number]; // descending
    vectors: [number[], number[], number[]]; // columns, matching values
}

/**
 * Eigen-decomposition of a symmetric 3x3 by cyclic Jacobi rotations.
 * Plenty for ellipsoid preview axes; not meant as a general solver.
 */
export function eigenSym3(m: Mat3): EigenSym3 {
    const a = m.map((row) => row.slice());
    const v = [
        [1, 0, 0],
        [0, 1, 0],
        [0, 0, 1],
    ];
    for (let sweep = 0; sweep < 32; sweep++) {
        let off = 0;
        for (const [p, q] of [
            [0, 1],
            [0, 2],
            [1, 2],
        ] as const) {
            off += a[p][q] * a[p][q];
        }
        if (off < 1e-30) {
            break;
        }
        for (const [p, q] of [
            [0, 1],
            [0, 2],
            [1, 2],
        ] as const) {
            if (Math.abs(a[p][q]) < 1e-300) {
                continue;
            }
            const theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
            const t = Math.sign(theta || 1) / (Math.abs(theta) + Math.sqrt(theta * theta + 1));
            const c = 1 / Math.sqrt(t * t + 1);
            const s = t * c;
            for (let k = 0; k < 3; k++) {
                const akp = a[k][p];
                const akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for (let k = 0; k < 3; k++) {
                const apk = a[p][k];
                const aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for (let k = 0; k < 3; k++) {
                const vkp = v[k][p];
                const vkq = v[k][q];
                v[k][p] = c * vkp - s * vkq;
                v[k][q] = s * vkp + c * vkq;
            }
        }
    }
    const order = [0, 1, 2].sort((i, j) => a[j][j] - a[i][i]);
    const values = order.map((i) => a[i][i]) as [number, number, number];
    const vectors = order.map((i) => [v[0][i], v[1][i], v[2][i]]) as [
        number[],
        number[],
        number[],
    ];
    return { values, vectors };
}
