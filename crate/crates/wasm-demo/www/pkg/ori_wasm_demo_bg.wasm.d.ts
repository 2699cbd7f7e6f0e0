/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demorouter_free: (a: number, b: number) => void;
export const blobSweep: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number, number];
export const demorouter_models: (a: number) => [number, number];
export const demorouter_new: (a: number, b: number, c: bigint) => [number, number, number];
export const demorouter_projection: (a: number) => [number, number];
export const demorouter_route: (a: number, b: number, c: number) => [number, number, number, number];
export const demorouter_setEnabled: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
