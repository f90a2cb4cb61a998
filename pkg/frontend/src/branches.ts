/** Branch tree of (simId, forkStep) plus the fork flow controller. */

import type { ApiClient } from "./api.js";
import type { SimulationHandle } from "./types.js";

export interface BranchNode {
  simId: string;
  forkStep: number; // step at which this branch diverged; 0 for the root
  children: BranchNode[];
}

export function rootBranch(simId: string): BranchNode {
  return { simId, forkStep: 0, children: [] };
}

export function findBranch(node: BranchNode, simId: string): BranchNode | null {
  if (node.simId === simId) {
    return node;
  }
  for (const child of node.children) {
    const found = findBranch(child, simId);
    if (found) {
      return found;
    }
  }
  return null;
}

export function addBranch(
  tree: BranchNode,
  parentSimId: string,
  handle: SimulationHandle,
): BranchNode {
  const parent = findBranch(tree, parentSimId);
  if (!parent) {
    throw new Error(`unknown parent simulation ${parentSimId}`);
  }
  parent.children.push({
    simId: handle.sim_id,
    forkStep: handle.parent_sim?.fork_step ?? 0,
    children: [],
  });
  return tree;
}

export function countNodes(node: BranchNode): number {
  return 1 + node.children.reduce((sum, child) => sum + countNodes(child), 0);
}

/** Drives the what-if flow: edit assumption lines, fork once, grow the tree. */
export class ForkController {
  assumptions: string[];

  constructor(
    private readonly api: ApiClient,
    private readonly tree: BranchNode,
    baseAssumptions: string[],
  ) {
    this.assumptions = [...baseAssumptions];
  }

  editAssumption(index: number, text: string): void {
    if (index < 0 || index >= this.assumptions.length) {
      throw new Error(`no assumption at index ${index}`);
    }
    this.assumptions[index] = text;
  }

  /** Issues exactly one fork request and grafts the child onto the tree. */
  async fork(simId: string, atStep: number): Promise<SimulationHandle> {
    const handle = await this.api.fork(simId, atStep, this.assumptions);
    addBranch(this.tree, simId, handle);
    return handle;
  }
}
