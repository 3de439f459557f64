/** The single place server-provided numbers become display text.
 *
 * The workbench never derives numbers of its own; everything rendered as a
 * numeric string is a server value passed through one of these formatters.
 */

/** Fixed three-decimal rendering used for all metric and value cells. */
export function fmt3(value: number): string {
  return value.toFixed(3);
}

/** Exact rendering used where round-tripping matters (edit echoes). */
export function fmtExact(value: number): string {
  return String(value);
}
