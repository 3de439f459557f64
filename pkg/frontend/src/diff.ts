/** Sentence-level diff between two server-provided report texts.
 *
 * This compares texts; it never produces report content of its own — every
 * rendered sentence is a verbatim segment of one of the two inputs.
 */

export interface DiffSegment {
  kind: "common" | "removed" | "added";
  text: string;
}

/** Split a report into sentence units: header lines stay whole, prose lines
 * split at sentence-ending punctuation. */
export function splitSentences(text: string): string[] {
  const units: string[] = [];
  for (const rawLine of text.split("\n")) {
    const line = rawLine.trim();
    if (line === "") {
      continue;
    }
    if (/[.!?]\s/.test(line)) {
      for (const piece of line.split(/(?<=[.!?])\s+/)) {
        if (piece.trim() !== "") {
          units.push(piece.trim());
        }
      }
    } else {
      units.push(line);
    }
  }
  return units;
}

/** Longest-common-subsequence diff over sentence arrays. */
export function diffSentences(before: string[], after: string[]): DiffSegment[] {
  const n = before.length;
  const m = after.length;
  const lcs: number[][] = Array.from({ length: n + 1 }, () => new Array<number>(m + 1).fill(0));
  for (let i = n - 1; i >= 0; i--) {
    for (let j = m - 1; j >= 0; j--) {
      lcs[i]![j] =
        before[i] === after[j]
          ? lcs[i + 1]![j + 1]! + 1
          : Math.max(lcs[i + 1]![j]!, lcs[i]![j + 1]!);
    }
  }
  const segments: DiffSegment[] = [];
  let i = 0;
  let j = 0;
  while (i < n && j < m) {
    if (before[i] === after[j]) {
      segments.push({ kind: "common", text: before[i]! });
      i++;
      j++;
    } else if (lcs[i + 1]![j]! >= lcs[i]![j + 1]!) {
      segments.push({ kind: "removed", text: before[i]! });
      i++;
    } else {
      segments.push({ kind: "added", text: after[j]! });
      j++;
    }
  }
  for (; i < n; i++) {
    segments.push({ kind: "removed", text: before[i]! });
  }
  for (; j < m; j++) {
    segments.push({ kind: "added", text: after[j]! });
  }
  return segments;
}

export function diffReports(beforeText: string, afterText: string): DiffSegment[] {
  return diffSentences(splitSentences(beforeText), splitSentences(afterText));
}
