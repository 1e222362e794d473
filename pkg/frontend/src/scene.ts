import type { EllipsoidSpec } from './gizmo.js';
import type { StructurePayload, Vec3 } from './types.js';

// CPK-ish sphere colors. Anything unknown gets the fallback so a weird
// payload still renders instead of blanking the canvas.
const ELEMENT_COLORS: Record<string, string> = {
    H: '#e8e8e8',
    C: '#4a4a4a',
    N: '#2060c8',
    O: '#d4342a',
    F: '#35b03b',
    P: '#e07b28',
    S: '#d8c832',
    Cl: '#3fc43f',
    Br: '#a5312c',
};
const FALLBACK_COLOR = '#c76bb7';

const ELEMENT_RADII: Record<string, number> = {
    H: 0.25,
    C: 0.36,
    N: 0.34,
    O: 0.33,
    F: 0.3,
    P: 0.45,
    S: 0.44,
    Cl: 0.45,
    Br: 0.5,
};
const FALLBACK_RADIUS = 0.4;

// Scaffold atoms keep their identity readable but shift toward blue so
// the fixed substructure stands out from freshly sampled atoms.
const SCAFFOLD_TINT = '#3a6ecf';

export class SceneError extends Error {}

export interface SphereNode {
    center: Vec3;
    radius: number;
    color: string;
    element: string;
    scaffold: boolean;
}

export interface StickNode {
    a: Vec3;
    b: Vec3;
    colorA: string;
    colorB: string;
}

export interface RingNode {
    points: Vec3[]; // closed polyline in world space
}

export interface Scene {
    spheres: SphereNode[];
    sticks: StickNode[];
    rings: RingNode[]; // prior ellipsoid wireframe
}

function checkVec3(p: unknown): p is Vec3 {
    return (
        Array.isArray(p) &&
        p.length === 3 &&
        p.every((c) => typeof c === 'number' && Number.isFinite(c))
    );
}

/** Throws SceneError unless the payload matches {elements, positions}. */
export function validateStructure(payload: unknown): StructurePayload {
    if (payload === null || typeof payload !== 'object') {
        throw new SceneError('structure payload must be an object');
    }
    const data = payload as Record<string, unknown>;
    const elements = data.elements;
    const positions = data.positions;
    if (!Array.isArray(elements) || !elements.every((e) => typeof e === 'string')) {
        throw new SceneError('structure payload needs an element list');
    }
    if (!Array.isArray(positions) || !positions.every(checkVec3)) {
        throw new SceneError('structure payload needs [x, y, z] positions');
    }
    if (elements.length !== positions.length) {
        throw new SceneError(
            `element count ${elements.length} does not match ${positions.length} positions`,
        );
    }
    return { elements: elements as string[], positions: positions as Vec3[] };
}

export function elementColor(element: string, scaffold: boolean): string {
    if (scaffold) {
        return SCAFFOLD_TINT;
    }
    return ELEMENT_COLORS[element] ?? FALLBACK_COLOR;
}

function ellipsoidRings(spec: EllipsoidSpec, segments = 48): RingNode[] {
    // three principal great circles of the 1-sigma surface
    const rings: RingNode[] = [];
    const pairs: Array<[number, number]> = [
        [0, 1],
        [0, 2],
        [1, 2],
    ];
    for (const [u, v] of pairs) {
        const points: Vec3[] = [];
        for (let k = 0; k <= segments; k++) {
            const t = (2 * Math.PI * k) / segments;
            const cu = Math.cos(t) * spec.radii[u];
            const cv = Math.sin(t) * spec.radii[v];
            points.push([
                spec.center[0] + cu * spec.axes[u][0] + cv * spec.axes[v][0],
                spec.center[1] + cu * spec.axes[u][1] + cv * spec.axes[v][1],
                spec.center[2] + cu * spec.axes[u][2] + cv * spec.axes[v][2],
            ]);
        }
        rings.push({ points });
    }
    return rings;
}

export interface BuildOptions {
    scaffoldCount?: number;
    ellipsoid?: EllipsoidSpec | null;
}

/**
 * Build the render scene for one structure payload plus its server-side
 * bond list. Candidates are assembled scaffold-first by the service, so
 * the first `scaffoldCount` atoms get the scaffold tint. A null
 * structure yields an empty scene (plus the prior ellipsoid when given),
 * which is the blank-session state.
 *
 * Positions are taken verbatim; the scene never re-derives or adjusts
 * geometry, the service state is the single source of truth.
 */
export function buildScene(
    structure: StructurePayload | null,
    bonds: number[][] | null,
    options: BuildOptions = {},
): Scene {
    const scaffoldCount = options.scaffoldCount ?? 0;
    const scene: Scene = { spheres: [], sticks: [], rings: [] };
    if (structure !== null) {
        const checked = validateStructure(structure);
        checked.elements.forEach((element, i) => {
            const scaffold = i < scaffoldCount;
            scene.spheres.push({
                center: checked.positions[i],
                radius: ELEMENT_RADII[element] ?? FALLBACK_RADIUS,
                color: elementColor(element, scaffold),
                element,
                scaffold,
            });
        });
        for (const pair of bonds ?? []) {
            if (!Array.isArray(pair) || pair.length !== 2) {
                throw new SceneError('bond list entries must be [i, j] pairs');
            }
            const [i, j] = pair;
            if (!Number.isInteger(i) || !Number.isInteger(j) ||
                i < 0 || j < 0 || i >= checked.elements.length || j >= checked.elements.length) {
                throw new SceneError(`bond [${i}, ${j}] is out of range`);
            }
            scene.sticks.push({
                a: checked.positions[i],
                b: checked.positions[j],
                colorA: scene.spheres[i].color,
                colorB: scene.spheres[j].color,
            });
        }
    }
    if (options.ellipsoid) {
        scene.rings = ellipsoidRings(options.ellipsoid);
    }
    return scene;
}
