/**
 * Dendrogram threshold cuts, mirroring the engine byte-for-byte.
 *
 * Merges arrive as [left, right, distance, size] rows over node ids
 * where leaves are 0..leafCount-1 and merge i creates node leafCount+i.
 * The cut walks merges in order and stops at the first one whose
 * distance is >= the threshold, so a cut exactly at a merge distance
 * excludes that merge. Components are numbered by their smallest
 * contained leaf. The shared test vectors in tests/data/cut_vectors.json
 * pin this rule for both sides.
 */

export type Merge = [number, number, number, number];

export function cutDendrogram(
  merges: readonly Merge[],
  leafCount: number,
  threshold: number,
): number[] {
  if (threshold <= 0) {
    throw new Error("distance threshold must be > 0");
  }
  if (leafCount <= 0) {
    return [];
  }
  const parent: number[] = [];
  for (let i = 0; i < 2 * leafCount - 1; i++) {
    parent.push(i);
  }

  const find = (x: number): number => {
    let root = x;
    while (parent[root] !== root) {
      root = parent[root];
    }
    while (parent[x] !== root) {
      const next = parent[x];
      parent[x] = root;
      x = next;
    }
    return root;
  };

  let nextId = leafCount;
  for (const [a, b, distance] of merges) {
    if (distance >= threshold) {
      break;
    }
    parent[find(a)] = nextId;
    parent[find(b)] = nextId;
    nextId += 1;
  }

  const roots = new Map<number, number>();
  const labels: number[] = [];
  for (let leaf = 0; leaf < leafCount; leaf++) {
    const root = find(leaf);
    let label = roots.get(root);
    if (label === undefined) {
      label = roots.size;
      roots.set(root, label);
    }
    labels.push(label);
  }
  return labels;
}
