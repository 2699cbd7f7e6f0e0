/* tslint:disable */
/* eslint-disable */

/**
 * Router trained on generated keyword prompts, kept in memory.
 */
export class DemoRouter {
    free(): void;
    [Symbol.dispose](): void;
    models(): string;
    constructor(noise: number, per_topic: number, seed: bigint);
    projection(): string;
    route(text: string): string;
    setEnabled(model_id: string, enabled: boolean): string;
}

export function blobSweep(blobs: number, per_blob: number, spread: number, k_min: number, k_max: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demorouter_free: (a: number, b: number) => void;
    readonly blobSweep: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number, number];
    readonly demorouter_models: (a: number) => [number, number];
    readonly demorouter_new: (a: number, b: number, c: bigint) => [number, number, number];
    readonly demorouter_projection: (a: number) => [number, number];
    readonly demorouter_route: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demorouter_setEnabled: (a: number, b: number, c: number, d: number) => [number, number, number, number];
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
