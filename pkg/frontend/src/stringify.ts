/**
 * Canonical JSON, byte-compatible with the engine's serializer
 * (key-sorted, 2-space indent, UTF-8 literals, trailing newline).
 *
 * Number caveats, inherent to JSON in a browser: integral floats (4.0)
 * and integers at or beyond 1e16 cannot be told apart from plain ints
 * after parsing, so they are out of scope. The engine never puts either
 * into UI-bound files. Everything else, including exponent formatting
 * quirks like 1e-07 and -0.0, matches the engine exactly; the committed
 * canonical_cases.json fixture holds the byte-level contract.
 */

export type JsonValue =
  | null
  | boolean
  | number
  | string
  | JsonValue[]
  | { [key: string]: JsonValue };

/** Format a number the way the engine's serializer prints it. */
export function formatNumber(n: number): string {
  if (!Number.isFinite(n)) {
    throw new Error("NaN and infinities are not valid JSON");
  }
  if (Object.is(n, -0)) {
    return "-0.0";
  }
  if (Number.isInteger(n) && Math.abs(n) < 1e16) {
    return String(n);
  }
  // shortest round-trip digits, then re-layout with the engine's rules:
  // fixed notation while -4 <= exponent < 16, otherwise scientific with
  // a sign and a two-digit minimum exponent
  const shortest = n.toExponential();
  const match = /^(-?)(\d)(?:\.(\d+))?e([+-]\d+)$/.exec(shortest);
  if (!match) {
    throw new Error(`unexpected exponential form ${shortest}`);
  }
  const sign = match[1];
  const digits = match[2] + (match[3] ?? "");
  const exp = parseInt(match[4], 10);
  if (exp >= -4 && exp < 16) {
    if (exp >= digits.length - 1) {
      return sign + digits + "0".repeat(exp - (digits.length - 1)) + ".0";
    }
    if (exp >= 0) {
      return sign + digits.slice(0, exp + 1) + "." + digits.slice(exp + 1);
    }
    return sign + "0." + "0".repeat(-exp - 1) + digits;
  }
  const mantissa = match[3] ? `${match[2]}.${match[3]}` : match[2];
  const absExp = Math.abs(exp);
  const padded = absExp < 10 ? `0${absExp}` : String(absExp);
  return `${sign}${mantissa}e${exp < 0 ? "-" : "+"}${padded}`;
}

/** Engine key order: code points, not UTF-16 units. */
export function compareCodePoints(a: string, b: string): number {
  const aPoints = Array.from(a);
  const bPoints = Array.from(b);
  const n = Math.min(aPoints.length, bPoints.length);
  for (let i = 0; i < n; i++) {
    const diff = (aPoints[i].codePointAt(0) ?? 0) - (bPoints[i].codePointAt(0) ?? 0);
    if (diff !== 0) {
      return diff;
    }
  }
  return aPoints.length - bPoints.length;
}

function render(value: JsonValue, indent: string): string {
  if (value === null) {
    return "null";
  }
  if (typeof value === "boolean") {
    return value ? "true" : "false";
  }
  if (typeof value === "number") {
    return formatNumber(value);
  }
  if (typeof value === "string") {
    return JSON.stringify(value);
  }
  const deeper = indent + "  ";
  if (Array.isArray(value)) {
    if (value.length === 0) {
      return "[]";
    }
    const items = value.map((item) => deeper + render(item, deeper));
    return "[\n" + items.join(",\n") + "\n" + indent + "]";
  }
  const keys = Object.keys(value).sort(compareCodePoints);
  if (keys.length === 0) {
    return "{}";
  }
  const items = keys.map(
    (key) => deeper + JSON.stringify(key) + ": " + render(value[key], deeper),
  );
  return "{\n" + items.join(",\n") + "\n" + indent + "}";
}

export function stableStringify(value: JsonValue): string {
  return render(value, "");
}

/** The exact bytes the engine would write for this value. */
export function canonicalJson(value: JsonValue): string {
  return stableStringify(value) + "\n";
}
