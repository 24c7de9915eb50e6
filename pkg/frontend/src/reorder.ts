/** Drag-to-rank list: a pure order model plus DOM bindings.
 *
 * The list renders descriptions exactly in the served order and never
 * reorders on its own; every move is an explicit user action (drag, or
 * the keyboard-accessible up/down buttons). The submitted order is the
 * on-screen order, best first.
 */

export interface RankItem {
  slot: number;
  text: string;
}

export class RankOrder {
  private order: number[];
  private moved = false;

  constructor(private readonly items: RankItem[]) {
    this.order = items.map((item) => item.slot);
  }

  /** Slots in current on-screen order, best first. */
  currentOrder(): number[] {
    return [...this.order];
  }

  touched(): boolean {
    return this.moved;
  }

  itemAt(position: number): RankItem {
    const slot = this.order[position];
    const item = this.items.find((candidate) => candidate.slot === slot);
    if (!item) {
      throw new Error(`no item in slot ${slot}`);
    }
    return item;
  }

  size(): number {
    return this.order.length;
  }

  move(fromPosition: number, toPosition: number): void {
    if (
      fromPosition === toPosition ||
      fromPosition < 0 || fromPosition >= this.order.length ||
      toPosition < 0 || toPosition >= this.order.length
    ) {
      return;
    }
    const [slot] = this.order.splice(fromPosition, 1);
    this.order.splice(toPosition, 0, slot);
    this.moved = true;
  }

  /** Restore a previously submitted order (used when revising). */
  restore(order: number[]): void {
    const valid =
      order.length === this.order.length &&
      [...order].sort((a, b) => a - b).join(",") ===
        [...this.order].sort((a, b) => a - b).join(",");
    if (!valid) {
      throw new Error(`order ${order} does not cover the presented slots`);
    }
    this.order = [...order];
  }
}

export class RankListView {
  readonly model: RankOrder;
  private dragFrom: number | null = null;

  constructor(
    private readonly container: HTMLElement,
    items: RankItem[],
    private readonly doc: Document,
  ) {
    this.model = new RankOrder(items);
    this.render();
  }

  render(): void {
    this.container.innerHTML = "";
    const list = this.doc.createElement("ol");
    list.className = "rank-list";
    for (let position = 0; position < this.model.size(); position++) {
      list.appendChild(this.renderItem(position));
    }
    this.container.appendChild(list);
  }

  private renderItem(position: number): HTMLLIElement {
    const item = this.model.itemAt(position);
    const li = this.doc.createElement("li");
    li.className = "rank-item";
    li.draggable = true;
    li.dataset.position = String(position);
    li.dataset.slot = String(item.slot);

    const rank = this.doc.createElement("span");
    rank.className = "rank-number";
    rank.textContent = `${position + 1}.`;
    li.appendChild(rank);

    const text = this.doc.createElement("span");
    text.className = "rank-text";
    text.textContent = item.text;
    li.appendChild(text);

    const up = this.doc.createElement("button");
    up.className = "move-up";
    up.type = "button";
    up.textContent = "▲";
    up.title = "move up";
    up.addEventListener("click", () => {
      this.model.move(position, position - 1);
      this.render();
    });
    li.appendChild(up);

    const down = this.doc.createElement("button");
    down.className = "move-down";
    down.type = "button";
    down.textContent = "▼";
    down.title = "move down";
    down.addEventListener("click", () => {
      this.model.move(position, position + 1);
      this.render();
    });
    li.appendChild(down);

    li.addEventListener("dragstart", (event) => {
      this.dragFrom = position;
      li.classList.add("dragging");
      const transfer = (event as DragEvent).dataTransfer;
      if (transfer) {
        transfer.effectAllowed = "move";
        transfer.setData("text/plain", String(position));
      }
    });
    li.addEventListener("dragend", () => {
      this.dragFrom = null;
      li.classList.remove("dragging");
    });
    li.addEventListener("dragover", (event) => {
      event.preventDefault();
    });
    li.addEventListener("drop", (event) => {
      event.preventDefault();
      if (this.dragFrom !== null) {
        this.model.move(this.dragFrom, position);
        this.dragFrom = null;
        this.render();
      }
    });
    return li;
  }
}
