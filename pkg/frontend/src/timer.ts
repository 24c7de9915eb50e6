/** Wall-clock and active-time measurement for one annotation task.
 *
 * The raw duration runs from task display to submission; the active
 * duration excludes stretches where the tab was hidden. The server
 * flags raters on the raw duration, so both are reported.
 */

export type Clock = () => number;

export class TaskTimer {
  private startedAt: number;
  private activeMs = 0;
  private activeSince: number | null;

  constructor(private readonly now: Clock = () => Date.now()) {
    this.startedAt = this.now();
    this.activeSince = this.startedAt;
  }

  /** Called when the tab becomes hidden. Idempotent. */
  pause(): void {
    if (this.activeSince !== null) {
      this.activeMs += this.now() - this.activeSince;
      this.activeSince = null;
    }
  }

  /** Called when the tab becomes visible again. Idempotent. */
  resume(): void {
    if (this.activeSince === null) {
      this.activeSince = this.now();
    }
  }

  wallSeconds(): number {
    return Math.max(0, (this.now() - this.startedAt) / 1000);
  }

  activeSeconds(): number {
    let total = this.activeMs;
    if (this.activeSince !== null) {
      total += this.now() - this.activeSince;
    }
    return Math.max(0, total / 1000);
  }

  /** Wire pause/resume to the document's visibility; returns a detach
   * function so a new task can install a fresh timer. */
  bindVisibility(doc: Document): () => void {
    const onChange = () => {
      if (doc.visibilityState === "hidden") {
        this.pause();
      } else {
        this.resume();
      }
    };
    doc.addEventListener("visibilitychange", onChange);
    return () => doc.removeEventListener("visibilitychange", onChange);
  }
}
