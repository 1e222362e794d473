// DOM wiring for the design console. All state lives in DesignConsole;
// this file renders it and forwards events. Nothing here computes
// geometry beyond screen-space projection.

import { ApiClient } from './api.js';
import { CameraPose, drawScene, screenToWorld } from './canvas.js';
import { DesignConsole } from './console.js';
import {
    NAMED_SHAPES,
    withCenter,
    withCholEntry,
    withElements,
    withNamedPreset,
} from './gizmo.js';
import { toXyz } from './xyz.js';
import type { CandidatePayload, Vec3 } from './types.js';

const DEFAULT_BASE = 'http://127.0.0.1:8000';

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (node === null) {
        throw new Error(`missing #${id}`);
    }
    return node as T;
}

let console_: DesignConsole = new DesignConsole(new ApiClient(DEFAULT_BASE));
let unsubscribe = () => {};

const viewport = el<HTMLCanvasElement>('viewport');
const ctx = viewport.getContext('2d')!;

const CHOL_LABELS = ['log L11', 'L21', 'log L22', 'L31', 'L32', 'log L33'];

function guard(promise: Promise<unknown>): void {
    // errors already land in state.banner / state.fieldError
    promise.catch(() => {});
}

function connect(base: string): void {
    unsubscribe();
    console_ = new DesignConsole(new ApiClient(base));
    unsubscribe = console_.subscribe(render);
    guard(
        console_
            .newSession(parseSeed())
            .then(() => new ApiClient(base).health())
            .then((h) => {
                el('health').textContent = `provider: ${h.provider}`;
            }),
    );
    render();
}

function parseSeed(): number | undefined {
    const raw = el<HTMLInputElement>('seed').value.trim();
    return raw === '' ? undefined : Number(raw);
}

// ---- viewport interaction: orbit drag, prior-blob drag, wheel zoom ----

let dragging: 'orbit' | 'prior' | null = null;
let lastX = 0;
let lastY = 0;

viewport.addEventListener('mousedown', (event) => {
    dragging = el<HTMLInputElement>('place-mode').checked ? 'prior' : 'orbit';
    lastX = event.offsetX;
    lastY = event.offsetY;
    if (dragging === 'prior') {
        placeBlobAt(event.offsetX, event.offsetY);
    }
});
viewport.addEventListener('mousemove', (event) => {
    if (dragging === 'orbit') {
        const camera: CameraPose = { ...console_.state.camera };
        camera.yaw += (event.offsetX - lastX) * 0.01;
        camera.pitch += (event.offsetY - lastY) * 0.01;
        camera.pitch = Math.max(-1.5, Math.min(1.5, camera.pitch));
        lastX = event.offsetX;
        lastY = event.offsetY;
        console_.setCamera(camera);
    } else if (dragging === 'prior') {
        placeBlobAt(event.offsetX, event.offsetY); // live preview while dragging
    }
});
window.addEventListener('mouseup', () => (dragging = null));
viewport.addEventListener('wheel', (event) => {
    event.preventDefault();
    const camera: CameraPose = { ...console_.state.camera };
    camera.zoom = Math.max(5, Math.min(200, camera.zoom * (event.deltaY < 0 ? 1.1 : 0.9)));
    console_.setCamera(camera);
});

function placeBlobAt(sx: number, sy: number): void {
    const world = screenToWorld(console_.state.camera, sx, sy, viewport.width, viewport.height);
    console_.updateGizmo(withCenter(console_.state.gizmo, world));
}

// ---- gizmo panel ----

function bindGizmoPanel(): void {
    for (const name of Object.keys(NAMED_SHAPES)) {
        el(`preset-${name}`).addEventListener('click', () => {
            console_.updateGizmo(withNamedPreset(console_.state.gizmo, name));
        });
    }
    el<HTMLInputElement>('scale').addEventListener('input', (event) => {
        const value = Number((event.target as HTMLInputElement).value);
        console_.updateGizmo({ ...console_.state.gizmo, scale: value });
    });
    const sliderBox = el('chol-sliders');
    CHOL_LABELS.forEach((label, i) => {
        const row = document.createElement('label');
        row.className = 'slider-row';
        const input = document.createElement('input');
        input.type = 'range';
        input.min = '-2.5';
        input.max = '2.5';
        input.step = '0.01';
        input.id = `chol-${i}`;
        input.addEventListener('input', () => {
            console_.updateGizmo(withCholEntry(console_.state.gizmo, i, Number(input.value)));
        });
        const caption = document.createElement('span');
        caption.textContent = label;
        row.append(caption, input);
        sliderBox.append(row);
    });
    el<HTMLInputElement>('elements').addEventListener('change', (event) => {
        const raw = (event.target as HTMLInputElement).value;
        const parsed = raw.split(/[\s,]+/).filter((s) => s.length > 0);
        console_.updateGizmo(withElements(console_.state.gizmo, parsed));
    });
    el('atom-minus').addEventListener('click', () => {
        const elems = console_.state.gizmo.elements;
        if (elems.length > 1) {
            console_.updateGizmo(withElements(console_.state.gizmo, elems.slice(0, -1)));
        }
    });
    el('atom-plus').addEventListener('click', () => {
        const elems = console_.state.gizmo.elements.concat(['H']);
        console_.updateGizmo(withElements(console_.state.gizmo, elems));
    });
    el('center-reset').addEventListener('click', () => {
        console_.updateGizmo(withCenter(console_.state.gizmo, null));
    });
    el('place-prior').addEventListener('click', () => guard(console_.placePrior()));
    el<HTMLInputElement>('show-ellipsoid').addEventListener('change', (event) => {
        console_.setDisplay({ ellipsoid: (event.target as HTMLInputElement).checked });
    });
    el<HTMLInputElement>('show-trail').addEventListener('change', (event) => {
        console_.setDisplay({ trail: (event.target as HTMLInputElement).checked });
    });
}

// ---- gallery ----

const SHAPE_TRIANGLE: Array<[number, number]> = [
    [0, 1], // rod
    [0.5, 0.5], // disc
    [1, 1], // sphere
];

function drawShapePlot(canvas: HTMLCanvasElement, point: [number, number] | null): void {
    const c = canvas.getContext('2d')!;
    const w = canvas.width;
    const h = canvas.height;
    const px = (npr1: number) => 4 + npr1 * (w - 8);
    const py = (npr2: number) => h - 4 - (npr2 - 0.4) * ((h - 8) / 0.6);
    c.clearRect(0, 0, w, h);
    c.strokeStyle = '#888';
    c.beginPath();
    SHAPE_TRIANGLE.forEach(([a, b], i) => {
        if (i === 0) {
            c.moveTo(px(a), py(b));
        } else {
            c.lineTo(px(a), py(b));
        }
    });
    c.closePath();
    c.stroke();
    if (point !== null) {
        c.fillStyle = '#e08820';
        c.beginPath();
        c.arc(px(point[0]), py(point[1]), 3, 0, 2 * Math.PI);
        c.fill();
    }
}

function galleryCard(candidate: CandidatePayload, index: number): HTMLElement {
    const card = document.createElement('div');
    card.className =
        'card' + (console_.state.gallerySelection === index ? ' selected' : '');

    const thumb = document.createElement('canvas');
    thumb.width = 120;
    thumb.height = 90;
    const scene = console_.candidateScene(index);
    drawScene(thumb.getContext('2d')!, scene, { ...console_.state.camera, zoom: 12 }, 120, 90);

    const badge = document.createElement('span');
    badge.className = candidate.valid ? 'badge ok' : 'badge bad';
    badge.textContent = candidate.valid ? 'valid' : `invalid: ${candidate.reason}`;

    const shape = document.createElement('canvas');
    shape.width = 56;
    shape.height = 48;
    shape.className = 'shape-plot';
    drawShapePlot(shape, candidate.shape_point);

    const meta = document.createElement('div');
    meta.className = 'meta';
    meta.textContent = `${candidate.structure.elements.length} atoms, NFE ${candidate.nfe}`;

    const acceptBtn = document.createElement('button');
    acceptBtn.textContent = 'accept';
    acceptBtn.addEventListener('click', (event) => {
        event.stopPropagation();
        const removeRaw = el<HTMLInputElement>('remove-atoms').value.trim();
        const remove =
            removeRaw === ''
                ? []
                : removeRaw.split(/[\s,]+/).map((s) => Number(s)).filter(Number.isInteger);
        guard(console_.acceptCandidate(index, remove));
    });

    card.append(thumb, badge, shape, meta, acceptBtn);
    card.addEventListener('click', () => console_.select(index));
    return card;
}

// ---- render loop ----

function render(): void {
    const state = console_.state;
    el('session-label').textContent = state.sessionId ?? 'no session';
    el('history').textContent = `history ${state.session?.history_depth ?? 0}`;

    const banner = el('banner');
    banner.hidden = state.banner === null;
    el('banner-text').textContent = state.banner ?? '';
    el<HTMLButtonElement>('banner-retry').hidden = !state.canRetry;

    const fieldError = el('field-error');
    fieldError.textContent =
        state.fieldError === null
            ? ''
            : (state.fieldError.field === null ? '' : `${state.fieldError.field}: `) +
              state.fieldError.message;

    el('job-note').textContent = state.busy ? state.jobNote ?? 'working...' : '';
    el<HTMLDivElement>('progress').classList.toggle('active', state.busy);
    el<HTMLButtonElement>('sample').disabled = state.busy || state.sessionId === null;
    el<HTMLButtonElement>('undo').disabled =
        (state.session?.history_depth ?? 0) === 0 || state.busy;

    el('warnings').textContent = state.warnings.join('; ');

    // main viewport: selected candidate when there is one, else scaffold
    const scene =
        state.gallerySelection !== null
            ? console_.candidateScene(state.gallerySelection)
            : console_.scaffoldScene();
    for (const seg of console_.trailSegments()) {
        scene.sticks.push({
            a: seg.a,
            b: seg.b,
            colorA: 'rgba(224, 136, 32, 0.25)',
            colorB: 'rgba(224, 136, 32, 0.25)',
        });
    }
    drawScene(ctx, scene, state.camera, viewport.width, viewport.height);

    const gallery = el('gallery');
    gallery.replaceChildren(
        ...(state.session?.gallery ?? []).map((candidate, i) => galleryCard(candidate, i)),
    );

    const gizmo = state.gizmo;
    el('center-label').textContent =
        gizmo.center === null
            ? 'center: origin'
            : `center: ${gizmo.center.map((c) => c.toFixed(2)).join(', ')}`;
    el<HTMLInputElement>('elements').value = gizmo.elements.join(',');
    el('atom-count').textContent = String(gizmo.elements.length);
    el('mode-label').textContent =
        gizmo.mode === 'named' ? `preset: ${gizmo.named}` : 'custom covariance';
    gizmo.chol.forEach((value, i) => {
        const slider = document.getElementById(`chol-${i}`) as HTMLInputElement | null;
        if (slider !== null && document.activeElement !== slider) {
            slider.value = String(value);
        }
    });
}

// ---- top-level buttons ----

el('connect').addEventListener('click', () => {
    connect(el<HTMLInputElement>('base-url').value.trim() || DEFAULT_BASE);
});
el('sample').addEventListener('click', () => {
    const count = Number(el<HTMLInputElement>('sample-count').value) || 3;
    guard(console_.requestSamples(count));
});
el('undo').addEventListener('click', () => guard(console_.undoStep()));
el('banner-retry').addEventListener('click', () => guard(console_.retrySample()));
el('banner-close').addEventListener('click', () => console_.dismissBanner());
el('download').addEventListener('click', () => {
    const scaffold = console_.state.session?.scaffold;
    if (!scaffold) {
        return;
    }
    const blob = new Blob([toXyz(scaffold, `scaffold ${console_.state.sessionId}`)], {
        type: 'chemical/x-xyz',
    });
    const link = document.createElement('a');
    link.href = URL.createObjectURL(blob);
    link.download = 'scaffold.xyz';
    link.click();
    URL.revokeObjectURL(link.href);
});

el<HTMLInputElement>('base-url').value = DEFAULT_BASE;
bindGizmoPanel();
unsubscribe = console_.subscribe(render);
render();
