// Pointer-as-gaze with rate limiting: at most maxRate messages per second,
// always ending on the latest position (trailing send). Leaving the canvas
// freezes the gaze at its last position.

export class GazeThrottle {
  private lastSent = -Infinity;
  private pending: [number, number] | null = null;
  private timerArmed = false;
  lastGaze: [number, number] | null = null;

  constructor(
    private send: (x: number, y: number) => void,
    private maxRate = 60,
    private now: () => number = () => performance.now(),
    private schedule: (fn: () => void, ms: number) => void = (fn, ms) => setTimeout(fn, ms),
  ) {}

  get minIntervalMs(): number {
    return 1000 / this.maxRate;
  }

  move(x: number, y: number): void {
    this.lastGaze = [x, y];
    const t = this.now();
    if (t - this.lastSent >= this.minIntervalMs) {
      this.lastSent = t;
      this.send(x, y);
      return;
    }
    this.pending = [x, y];
    if (!this.timerArmed) {
      this.timerArmed = true;
      const wait = this.minIntervalMs - (t - this.lastSent);
      this.schedule(() => this.flush(), wait);
    }
  }

  private flush(): void {
    this.timerArmed = false;
    if (this.pending) {
      const [x, y] = this.pending;
      this.pending = null;
      this.lastSent = this.now();
      this.send(x, y);
    }
  }
}
