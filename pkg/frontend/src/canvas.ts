import type { Scene } from './scene.js';
import type { Vec3 } from './types.js';

/** Orbit camera with an orthographic projection. zoom is px per Angstrom. */
export interface CameraPose {
    yaw: number;
    pitch: number;
    zoom: number;
    target: Vec3;
}

export function defaultCamera(): CameraPose {
    return { yaw: 0.5, pitch: 0.35, zoom: 40, target: [0, 0, 0] };
}

function rotate(camera: CameraPose, p: Vec3): Vec3 {
    const x = p[0] - camera.target[0];
    const y = p[1] - camera.target[1];
    const z = p[2] - camera.target[2];
    const cy = Math.cos(camera.yaw);
    const sy = Math.sin(camera.yaw);
    const cp = Math.cos(camera.pitch);
    const sp = Math.sin(camera.pitch);
    // yaw about world y, then pitch about camera x
    const x1 = cy * x + sy * z;
    const z1 = -sy * x + cy * z;
    const y2 = cp * y - sp * z1;
    const z2 = sp * y + cp * z1;
    return [x1, y2, z2];
}

/** World point to [screenX, screenY, depth]; depth only orders drawing. */
export function project(camera: CameraPose, p: Vec3, width: number, height: number): Vec3 {
    const r = rotate(camera, p);
    return [width / 2 + r[0] * camera.zoom, height / 2 - r[1] * camera.zoom, r[2]];
}

/**
 * Screen point back to the world plane through the camera target
 * (depth 0 in view space). Used to drag the prior blob around: the blob
 * follows the pointer on the plane facing the viewer.
 */
export function screenToWorld(
    camera: CameraPose,
    sx: number,
    sy: number,
    width: number,
    height: number,
): Vec3 {
    const vx = (sx - width / 2) / camera.zoom;
    const vy = (height / 2 - sy) / camera.zoom;
    const cy = Math.cos(camera.yaw);
    const sy_ = Math.sin(camera.yaw);
    const cp = Math.cos(camera.pitch);
    const sp = Math.sin(camera.pitch);
    // invert pitch then yaw for the view-space point (vx, vy, 0)
    const y = cp * vy;
    const z1 = -sp * vy;
    const x = cy * vx - sy_ * z1;
    const z = sy_ * vx + cy * z1;
    return [x + camera.target[0], y + camera.target[1], z + camera.target[2]];
}

interface PaintItem {
    depth: number;
    draw: (ctx: CanvasRenderingContext2D) => void;
}

/**
 * Paint the scene back to front. Spheres are shaded circles and sticks
 * are two-tone thick lines, which reads fine for small molecules and
 * keeps the console free of a GPU dependency.
 */
export function drawScene(
    ctx: CanvasRenderingContext2D,
    scene: Scene,
    camera: CameraPose,
    width: number,
    height: number,
): void {
    ctx.clearRect(0, 0, width, height);
    const items: PaintItem[] = [];

    for (const ring of scene.rings) {
        const pts = ring.points.map((p) => project(camera, p, width, height));
        const depth = Math.min(...pts.map((p) => p[2]));
        items.push({
            depth,
            draw: (c) => {
                c.beginPath();
                pts.forEach(([x, y], i) => (i === 0 ? c.moveTo(x, y) : c.lineTo(x, y)));
                c.strokeStyle = 'rgba(224, 136, 32, 0.8)';
                c.lineWidth = 1.5;
                c.stroke();
            },
        });
    }

    for (const stick of scene.sticks) {
        const a = project(camera, stick.a, width, height);
        const b = project(camera, stick.b, width, height);
        const mid: Vec3 = [(a[0] + b[0]) / 2, (a[1] + b[1]) / 2, (a[2] + b[2]) / 2];
        const w = Math.max(2, camera.zoom * 0.12);
        items.push({
            depth: (a[2] + b[2]) / 2,
            draw: (c) => {
                c.lineWidth = w;
                c.lineCap = 'round';
                c.strokeStyle = stick.colorA;
                c.beginPath();
                c.moveTo(a[0], a[1]);
                c.lineTo(mid[0], mid[1]);
                c.stroke();
                c.strokeStyle = stick.colorB;
                c.beginPath();
                c.moveTo(mid[0], mid[1]);
                c.lineTo(b[0], b[1]);
                c.stroke();
            },
        });
    }

    for (const sphere of scene.spheres) {
        const p = project(camera, sphere.center, width, height);
        const r = Math.max(2, sphere.radius * camera.zoom);
        items.push({
            depth: p[2],
            draw: (c) => {
                const grad = c.createRadialGradient(
                    p[0] - r * 0.35, p[1] - r * 0.35, r * 0.15,
                    p[0], p[1], r,
                );
                grad.addColorStop(0, '#ffffff');
                grad.addColorStop(0.25, sphere.color);
                grad.addColorStop(1, sphere.color);
                c.fillStyle = grad;
                c.beginPath();
                c.arc(p[0], p[1], r, 0, 2 * Math.PI);
                c.fill();
                if (sphere.scaffold) {
                    c.strokeStyle = '#1d3f86';
                    c.lineWidth = 1.5;
                    c.stroke();
                }
            },
        });
    }

    items.sort((a, b) => a.depth - b.depth);
    for (const item of items) {
        item.draw(ctx);
    }
}
