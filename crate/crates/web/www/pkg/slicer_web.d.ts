/* tslint:disable */
/* eslint-disable */

export class FieldImage {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Transferred fraction, row-major.
     */
    readonly fraction: Float64Array;
    readonly orientation: number;
    readonly pixels: number;
    /**
     * µm; infinite with fewer than two stripes.
     */
    readonly spacing: number;
    readonly stripes: number;
}

export function adiabaticity(duration_ms: number): number;

/**
 * Spectral image of a quadrupole displaced by `stray` (µm) with transverse
 * shims (G) applied.
 */
export function field_image(stray_x: number, stray_y: number, shim_x: number, shim_y: number, pixels: number): FieldImage;

/**
 * Layer-scan fluorescence, interleaved as `[δ₁, signal, δ₁, signal, ...]`,
 * over ±1.5 layer shifts. `mode` is `up`, `down` or `both`.
 */
export function layer_scan(mode: string, duration_ms: number, spin_up_fraction: number, points: number): Float64Array;

/**
 * Transition 1 transfer probability on `points` detunings spanning
 * ±`span_khz`, for a pulse of `duration_ms`.
 */
export function transfer_profile(duration_ms: number, span_khz: number, points: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_fieldimage_free: (a: number, b: number) => void;
    readonly adiabaticity: (a: number) => [number, number, number];
    readonly field_image: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly fieldimage_fraction: (a: number) => [number, number];
    readonly fieldimage_orientation: (a: number) => number;
    readonly fieldimage_pixels: (a: number) => number;
    readonly fieldimage_spacing: (a: number) => number;
    readonly fieldimage_stripes: (a: number) => number;
    readonly layer_scan: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly transfer_profile: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
