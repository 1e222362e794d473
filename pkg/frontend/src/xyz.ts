import type { StructurePayload } from './types.js';

/** Serialize a structure payload to xyz text for download. */
export function toXyz(structure: StructurePayload, comment = ''): string {
    const lines = [String(structure.elements.length), comment.replace(/\n/g, ' ')];
    structure.elements.forEach((element, i) => {
        const [x, y, z] = structure.positions[i];
        lines.push(`${element} ${x.toFixed(8)} ${y.toFixed(8)} ${z.toFixed(8)}`);
    });
    return lines.join('\n') + '\n';
}
