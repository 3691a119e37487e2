/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_fieldimage_free: (a: number, b: number) => void;
export const adiabaticity: (a: number) => [number, number, number];
export const field_image: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const fieldimage_fraction: (a: number) => [number, number];
export const fieldimage_orientation: (a: number) => number;
export const fieldimage_pixels: (a: number) => number;
export const fieldimage_spacing: (a: number) => number;
export const fieldimage_stripes: (a: number) => number;
export const layer_scan: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const transfer_profile: (a: number, b: number, c: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
