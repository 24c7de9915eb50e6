/** The annotation client: a large video viewport with the rankable
 * descriptions at the side, drag or buttons to reorder, submit / skip /
 * back navigation, and a guidelines link. Timing runs from task display
 * to submission, with hidden-tab time tracked separately. */

import { AnnotationApi, ApiError, TaskView } from "./api.js";
import { RankListView } from "./reorder.js";
import { TaskTimer } from "./timer.js";

export interface AppOptions {
  /** Confirmation hook for untouched-order submissions; window.confirm
   * in the browser, injectable in tests. */
  confirm?: (message: string) => boolean;
  clock?: () => number;
}

export class AnnotationApp {
  private token: string | null = null;
  private task: TaskView | null = null;
  private rankList: RankListView | null = null;
  private timer: TaskTimer | null = null;
  private detachVisibility: (() => void) | null = null;
  private revising = false;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: AnnotationApi,
    private readonly doc: Document,
    private readonly options: AppOptions = {},
  ) {}

  async start(raterId: string): Promise<void> {
    const session = await this.api.createSession(raterId);
    this.token = session.token;
    await this.loadNext();
  }

  currentTask(): TaskView | null {
    return this.task;
  }

  currentOrder(): number[] {
    if (!this.rankList) {
      throw new Error("no task rendered");
    }
    return this.rankList.model.currentOrder();
  }

  async loadNext(): Promise<void> {
    if (!this.token) throw new Error("no session");
    this.revising = false;
    try {
      const task = await this.api.nextTask(this.token);
      this.renderTask(task);
    } catch (error) {
      if (error instanceof ApiError && error.errorName === "NoTasksLeft") {
        this.renderDone();
        return;
      }
      throw error;
    }
  }

  async loadPrevious(): Promise<void> {
    if (!this.token) throw new Error("no session");
    const task = await this.api.previousTask(this.token);
    this.revising = true;
    this.renderTask(task);
  }

  renderTask(task: TaskView): void {
    this.task = task;
    this.detachVisibility?.();
    this.timer = new TaskTimer(this.options.clock);
    this.detachVisibility = this.timer.bindVisibility(this.doc);

    this.root.innerHTML = "";

    const header = this.doc.createElement("header");
    const progress = this.doc.createElement("span");
    progress.className = "progress";
    progress.textContent = `${task.completed} / ${task.total} videos annotated`;
    header.appendChild(progress);
    const guide = this.doc.createElement("a");
    guide.className = "guidelines";
    guide.href = task.instructions_url;
    guide.target = "_blank";
    guide.textContent = "annotation guidelines";
    header.appendChild(guide);
    if (task.is_qualification) {
      const banner = this.doc.createElement("div");
      banner.className = "qualification-banner";
      banner.textContent =
        "Qualification task: rank these descriptions carefully before real tasks unlock.";
      header.appendChild(banner);
    }
    this.root.appendChild(header);

    const main = this.doc.createElement("main");
    const video = this.doc.createElement("video");
    video.className = "viewport";
    video.controls = true;
    video.src = task.video_url;
    main.appendChild(video);

    const side = this.doc.createElement("aside");
    const hint = this.doc.createElement("p");
    hint.className = "hint";
    hint.textContent = "Drag the descriptions into order, best first.";
    side.appendChild(hint);

    const listContainer = this.doc.createElement("div");
    side.appendChild(listContainer);
    this.rankList = new RankListView(listContainer, task.descriptions, this.doc);

    const controls = this.doc.createElement("div");
    controls.className = "controls";
    const submit = this.doc.createElement("button");
    submit.className = "submit";
    submit.type = "button";
    submit.textContent = "Submit ranking";
    submit.addEventListener("click", () => void this.submit());
    controls.appendChild(submit);

    const skip = this.doc.createElement("button");
    skip.className = "skip";
    skip.type = "button";
    skip.textContent = "Skip video";
    skip.addEventListener("click", () => void this.skip());
    controls.appendChild(skip);

    const back = this.doc.createElement("button");
    back.className = "back";
    back.type = "button";
    back.textContent = "Previous annotation";
    back.addEventListener("click", () => void this.loadPrevious());
    controls.appendChild(back);

    side.appendChild(controls);
    const status = this.doc.createElement("p");
    status.className = "status";
    side.appendChild(status);
    main.appendChild(side);
    this.root.appendChild(main);
  }

  renderDone(): void {
    this.task = null;
    this.rankList = null;
    this.root.innerHTML = "";
    const done = this.doc.createElement("p");
    done.className = "all-done";
    done.textContent = "All videos annotated. Thank you!";
    this.root.appendChild(done);
  }

  private status(message: string): void {
    const element = this.root.querySelector(".status");
    if (element) {
      element.textContent = message;
    }
  }

  async submit(): Promise<void> {
    if (!this.token || !this.task || !this.rankList || !this.timer) {
      throw new Error("no task to submit");
    }
    if (!this.rankList.model.touched() && !this.revising) {
      const confirmFn = this.options.confirm ?? (() => true);
      const proceed = confirmFn(
        "You have not changed the order of the descriptions. " +
          "Submit the order exactly as presented?",
      );
      if (!proceed) {
        this.status("Submission cancelled.");
        return;
      }
    }
    const order = this.rankList.model.currentOrder();
    try {
      const result = await this.api.submitRanking(
        this.token,
        this.task.video_id,
        order,
        this.timer.wallSeconds(),
        this.timer.activeSeconds(),
      );
      if (result.is_qualification) {
        this.status(
          result.qualification_passed
            ? "Qualification passed."
            : "Qualification failed; please read the guidelines and try again.",
        );
      }
      await this.loadNext();
    } catch (error) {
      if (error instanceof ApiError) {
        this.status(`Submission failed (${error.errorName}). Please retry.`);
        return;
      }
      throw error;
    }
  }

  async skip(): Promise<void> {
    if (!this.token || !this.task) return;
    await this.api.skip(this.token, this.task.video_id);
    await this.loadNext();
  }
}
