// SVG log-scale line chart with labeled overlaid curves and clickable
// points. Renders only positive doses; a nonpositive value in any series is
// a data error surfaced by the caller, never silently dropped here.

export interface Series {
  label: string;
  distances: number[];
  doses: number[];
  color: string;
}

export interface PointClick {
  label: string;
  distance: number;
  dose: number;
}

const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
  "#8c564b", "#e377c2", "#17becf",
];

export function seriesColor(index: number): string {
  return PALETTE[index % PALETTE.length];
}

export function assertPositiveDoses(series: Series[]): void {
  for (const s of series) {
    for (const v of s.doses) {
      if (!(v > 0) || !Number.isFinite(v)) {
        throw new Error(`non-positive dose in series "${s.label}": ${v}`);
      }
    }
  }
}

export class LogChart {
  readonly root: SVGSVGElement;
  private onPointClick: ((p: PointClick) => void) | null = null;

  constructor(
    private readonly width = 640,
    private readonly height = 360,
    private readonly margin = { top: 16, right: 16, bottom: 40, left: 64 },
  ) {
    this.root = document.createElementNS("http://www.w3.org/2000/svg", "svg");
    this.root.setAttribute("viewBox", `0 0 ${width} ${height}`);
    this.root.setAttribute("class", "log-chart");
  }

  pointClicked(handler: (p: PointClick) => void): void {
    this.onPointClick = handler;
  }

  render(series: Series[]): void {
    assertPositiveDoses(series);
    while (this.root.firstChild) this.root.removeChild(this.root.firstChild);
    if (series.length === 0) return;

    const xs = series.flatMap((s) => s.distances);
    const ys = series.flatMap((s) => s.doses);
    const xMin = Math.min(...xs);
    const xMax = Math.max(...xs);
    const yMin = Math.log10(Math.min(...ys));
    const yMax = Math.log10(Math.max(...ys));
    const plotW = this.width - this.margin.left - this.margin.right;
    const plotH = this.height - this.margin.top - this.margin.bottom;
    const sx = (x: number) =>
      this.margin.left + ((x - xMin) / Math.max(xMax - xMin, 1e-12)) * plotW;
    const sy = (dose: number) => {
      const t = (Math.log10(dose) - yMin) / Math.max(yMax - yMin, 1e-12);
      return this.margin.top + (1 - t) * plotH;
    };

    const ns = "http://www.w3.org/2000/svg";
    // y-axis decade gridlines (log scale)
    for (let d = Math.ceil(yMin); d <= Math.floor(yMax); d++) {
      const line = document.createElementNS(ns, "line");
      const y = sy(10 ** d);
      line.setAttribute("x1", String(this.margin.left));
      line.setAttribute("x2", String(this.width - this.margin.right));
      line.setAttribute("y1", String(y));
      line.setAttribute("y2", String(y));
      line.setAttribute("class", "gridline");
      line.setAttribute("stroke", "#ddd");
      this.root.appendChild(line);
      const text = document.createElementNS(ns, "text");
      text.setAttribute("x", String(this.margin.left - 6));
      text.setAttribute("y", String(y + 4));
      text.setAttribute("text-anchor", "end");
      text.setAttribute("class", "tick");
      text.textContent = `1e${d}`;
      this.root.appendChild(text);
    }

    series.forEach((s) => {
      const path = document.createElementNS(ns, "path");
      const d = s.distances
        .map((x, i) => `${i === 0 ? "M" : "L"}${sx(x).toFixed(2)},${sy(s.doses[i]).toFixed(2)}`)
        .join(" ");
      path.setAttribute("d", d);
      path.setAttribute("fill", "none");
      path.setAttribute("stroke", s.color);
      path.setAttribute("stroke-width", "1.5");
      path.setAttribute("data-series", s.label);
      this.root.appendChild(path);

      s.distances.forEach((x, i) => {
        const dot = document.createElementNS(ns, "circle");
        dot.setAttribute("cx", String(sx(x)));
        dot.setAttribute("cy", String(sy(s.doses[i])));
        dot.setAttribute("r", "3");
        dot.setAttribute("fill", s.color);
        dot.setAttribute("class", "chart-point");
        dot.setAttribute("data-series", s.label);
        dot.setAttribute("data-distance", String(x));
        dot.setAttribute("data-dose", String(s.doses[i]));
        dot.addEventListener("click", () => {
          this.onPointClick?.({ label: s.label, distance: x, dose: s.doses[i] });
        });
        this.root.appendChild(dot);
      });

      const label = document.createElementNS(ns, "text");
      const lastX = s.distances[s.distances.length - 1];
      const lastY = s.doses[s.doses.length - 1];
      label.setAttribute("x", String(Math.min(sx(lastX) + 4, this.width - 4)));
      label.setAttribute("y", String(sy(lastY)));
      label.setAttribute("fill", s.color);
      label.setAttribute("class", "curve-label");
      label.textContent = s.label;
      this.root.appendChild(label);
    });
  }

  curveLabels(): string[] {
    return Array.from(this.root.querySelectorAll("path[data-series]")).map(
      (p) => p.getAttribute("data-series") ?? "",
    );
  }
}
