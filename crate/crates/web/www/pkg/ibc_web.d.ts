/* tslint:disable */
/* eslint-disable */

/**
 * One closed-loop run, flattened for canvas drawing. Matrices are row-major
 * `steps x sections`.
 */
export class SimulationView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    baseline_tts(): number;
    /**
     * Commanded sharing factor per model step.
     */
    eps(): Float64Array;
    relative_a(): Float64Array;
    relative_b(): Float64Array;
    saturations(): number;
    sections(): number;
    steps(): number;
    tts(): number;
}

/**
 * TOML text of a shipped scenario (`uncongested` or `congested`).
 */
export function builtin_scenario(name: string): string | undefined;

export function design(toml: string, p1: number, p2: number, sigma: number): Float64Array;

export function simulate(toml: string, controller: string, p1: number, p2: number, capacity_drop: boolean, activation_step: number): SimulationView;

export function sweep(toml: string, controller: string, count: number, seed: bigint, capacity_drop: boolean): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_simulationview_free: (a: number, b: number) => void;
    readonly builtin_scenario: (a: number, b: number) => [number, number];
    readonly design: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly simulate: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
    readonly simulationview_baseline_tts: (a: number) => number;
    readonly simulationview_eps: (a: number) => [number, number];
    readonly simulationview_relative_a: (a: number) => [number, number];
    readonly simulationview_relative_b: (a: number) => [number, number];
    readonly simulationview_saturations: (a: number) => number;
    readonly simulationview_sections: (a: number) => number;
    readonly simulationview_steps: (a: number) => number;
    readonly simulationview_tts: (a: number) => number;
    readonly sweep: (a: number, b: number, c: number, d: number, e: number, f: bigint, g: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
