export interface ToastOptions {
  ttlMs?: number;
}

/** Stacks transient notifications in a host element; newest on top. */
export class ToastHost {
  private readonly ttlMs: number;

  constructor(
    private readonly host: HTMLElement,
    opts: ToastOptions = {},
  ) {
    this.ttlMs = opts.ttlMs ?? 6000;
    host.classList.add("toast-host");
  }

  show(message: string, kind: "alert" | "info" = "info"): HTMLElement {
    const toast = document.createElement("div");
    toast.className = `toast toast-${kind}`;
    toast.setAttribute("role", "status");
    toast.textContent = message;
    this.host.prepend(toast);
    setTimeout(() => toast.remove(), this.ttlMs);
    return toast;
  }
}
