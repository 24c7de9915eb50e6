import { describe, expect, it } from "vitest";

import { RankListView, RankOrder } from "../src/reorder.js";

const ITEMS = [
  { slot: 0, text: "alpha" },
  { slot: 1, text: "beta" },
  { slot: 2, text: "gamma" },
];

describe("RankOrder", () => {
  it("starts in the served order, untouched", () => {
    const model = new RankOrder(ITEMS);
    expect(model.currentOrder()).toEqual([0, 1, 2]);
    expect(model.touched()).toBe(false);
  });

  it("move reorders and marks touched", () => {
    const model = new RankOrder(ITEMS);
    model.move(2, 0);
    expect(model.currentOrder()).toEqual([2, 0, 1]);
    expect(model.touched()).toBe(true);
  });

  it("out-of-range moves are ignored", () => {
    const model = new RankOrder(ITEMS);
    model.move(0, 5);
    model.move(-1, 0);
    model.move(1, 1);
    expect(model.currentOrder()).toEqual([0, 1, 2]);
    expect(model.touched()).toBe(false);
  });

  it("the order always stays a complete permutation", () => {
    const model = new RankOrder(ITEMS);
    const moves: Array<[number, number]> = [[0, 2], [1, 0], [2, 1], [0, 0]];
    for (const [from, to] of moves) {
      model.move(from, to);
      expect([...model.currentOrder()].sort()).toEqual([0, 1, 2]);
    }
  });

  it("restore accepts only complete permutations", () => {
    const model = new RankOrder(ITEMS);
    model.restore([2, 1, 0]);
    expect(model.currentOrder()).toEqual([2, 1, 0]);
    expect(() => model.restore([0, 1])).toThrow();
    expect(() => model.restore([0, 1, 1])).toThrow();
  });
});

describe("RankListView", () => {
  function view() {
    const container = document.createElement("div");
    document.body.appendChild(container);
    return { listView: new RankListView(container, ITEMS, document), container };
  }

  it("renders items in served order with rank numbers", () => {
    const { listView, container } = view();
    const texts = Array.from(container.querySelectorAll(".rank-text"))
      .map((node) => node.textContent);
    expect(texts).toEqual(["alpha", "beta", "gamma"]);
    const numbers = Array.from(container.querySelectorAll(".rank-number"))
      .map((node) => node.textContent);
    expect(numbers).toEqual(["1.", "2.", "3."]);
    expect(listView.model.touched()).toBe(false);
  });

  it("move buttons reorder the on-screen list", () => {
    const { listView, container } = view();
    const downButtons = container.querySelectorAll<HTMLButtonElement>(".move-down");
    downButtons[0].click();
    expect(listView.model.currentOrder()).toEqual([1, 0, 2]);
    const texts = Array.from(container.querySelectorAll(".rank-text"))
      .map((node) => node.textContent);
    expect(texts).toEqual(["beta", "alpha", "gamma"]);
  });

  it("drag events reorder the model", () => {
    const { listView, container } = view();
    const items = () => container.querySelectorAll<HTMLLIElement>(".rank-item");
    items()[2].dispatchEvent(new Event("dragstart", { bubbles: true }));
    items()[0].dispatchEvent(new Event("drop", { bubbles: true }));
    expect(listView.model.currentOrder()).toEqual([2, 0, 1]);
    expect(listView.model.touched()).toBe(true);
  });
});
