/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_simulationview_free: (a: number, b: number) => void;
export const builtin_scenario: (a: number, b: number) => [number, number];
export const design: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const simulate: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
export const simulationview_baseline_tts: (a: number) => number;
export const simulationview_eps: (a: number) => [number, number];
export const simulationview_relative_a: (a: number) => [number, number];
export const simulationview_relative_b: (a: number) => [number, number];
export const simulationview_saturations: (a: number) => number;
export const simulationview_sections: (a: number) => number;
export const simulationview_steps: (a: number) => number;
export const simulationview_tts: (a: number) => number;
export const sweep: (a: number, b: number, c: number, d: number, e: number, f: bigint, g: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
