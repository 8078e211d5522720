/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_runresult_free: (a: number, b: number) => void;
export const adaptiveRun: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const parameterCurves: (a: number, b: number, c: number) => [number, number];
export const partitionHistory: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
export const runresult_coords: (a: number) => [number, number];
export const runresult_levelsCsv: (a: number) => [number, number];
export const runresult_solution: (a: number) => [number, number];
export const runresult_triangles: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
