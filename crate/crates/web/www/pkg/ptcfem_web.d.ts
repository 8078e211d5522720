/* tslint:disable */
/* eslint-disable */

/**
 * Final level of an adaptive run plus the per-level report.
 */
export class RunResult {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Interleaved `x, y` per vertex.
     */
    readonly coords: Float64Array;
    /**
     * `levels.csv` contents.
     */
    readonly levelsCsv: string;
    /**
     * Nodal values of the final iterate.
     */
    readonly solution: Float64Array;
    /**
     * Three vertex indices per element.
     */
    readonly triangles: Uint32Array;
}

/**
 * Runs the adaptive loop until `max_levels` or `max_elements` is reached.
 * A non-positive `gamma0` selects the per-problem default.
 */
export function adaptiveRun(name: string, epsilon: number, gamma0: number, max_levels: number, max_elements: number): RunResult;

/**
 * `samples` rows of `r, theta_C, theta_F, sigma` for residuals spaced
 * logarithmically in `[1e-2, r_max]`, flattened.
 */
export function parameterCurves(theta: number, r_max: number, samples: number): Float64Array;

/**
 * Residual history of one solve from the zero field on the `n`-by-`n`
 * crisscross mesh, with the regularizer built from that field.
 */
export function partitionHistory(name: string, epsilon: number, n: number, variant: string, gamma: number, max_iterations: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_runresult_free: (a: number, b: number) => void;
    readonly adaptiveRun: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly parameterCurves: (a: number, b: number, c: number) => [number, number];
    readonly partitionHistory: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly runresult_coords: (a: number) => [number, number];
    readonly runresult_levelsCsv: (a: number) => [number, number];
    readonly runresult_solution: (a: number) => [number, number];
    readonly runresult_triangles: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
