// Console wiring: scenario submission, surrogate-vs-reference comparison
// table, log-scale profile chart, session history, and what-if sweeps.
// Every number on screen comes from a server response field; the client
// only formats. A nonpositive dose in a response is a data error rendered
// as a banner, never a silent drop.

import {
  ApiError,
  DoseApi,
  fanOut,
  PredictResponse,
  ProfileResponse,
} from "./api.js";
import { LogChart, Series, seriesColor } from "./chart.js";
import { Scenario, ScenarioForm } from "./form.js";

export interface HistoryEntry {
  scenario: Scenario;
  predict: PredictResponse;
}

export type SweepAxis = "height" | "distance" | "stability";

const DEFAULT_PROFILE_POINTS = 25;
const DEVIATION_OK_PERCENT = 2.0;
const DEVIATION_WARN_PERCENT = 5.0;

export function deviationClass(absDeviationPercent: number): string {
  if (absDeviationPercent <= DEVIATION_OK_PERCENT) return "dev-ok";
  if (absDeviationPercent <= DEVIATION_WARN_PERCENT) return "dev-warn";
  return "dev-bad";
}

export function profileDistances(
  min = 25,
  max = 2000,
  n = DEFAULT_PROFILE_POINTS,
): number[] {
  const out: number[] = [];
  const logMin = Math.log(min);
  const logMax = Math.log(max);
  for (let i = 0; i < n; i++) {
    out.push(Math.exp(logMin + ((logMax - logMin) * i) / (n - 1)));
  }
  return out;
}

export class Console {
  readonly form: ScenarioForm;
  readonly chart: LogChart;
  readonly table: HTMLTableElement;
  readonly banner: HTMLDivElement;
  readonly historyList: HTMLUListElement;
  readonly sweepWarning: HTMLDivElement;
  readonly history: HistoryEntry[] = [];
  models: string[] = ["forest", "boosted"];
  liveSweep = false;
  sweepDebounceMs = 250;
  private sweepTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly api: DoseApi,
    readonly root: HTMLElement,
  ) {
    const doc = root.ownerDocument;
    this.form = new ScenarioForm(doc);
    this.chart = new LogChart();
    this.table = doc.createElement("table");
    this.table.className = "comparison";
    this.banner = doc.createElement("div");
    this.banner.className = "banner hidden";
    this.historyList = doc.createElement("ul");
    this.historyList.className = "history";
    this.sweepWarning = doc.createElement("div");
    this.sweepWarning.className = "sweep-warning hidden";

    root.appendChild(this.banner);
    root.appendChild(this.form.root);
    root.appendChild(this.table);
    root.appendChild(this.chart.root);
    root.appendChild(this.sweepWarning);
    root.appendChild(this.historyList);

    this.form.onSubmit((scenario) => {
      void this.submitScenario(scenario);
    });
    this.chart.pointClicked((p) => {
      // clicking a curve point pre-fills the form with that scenario
      const parsed = this.scenarioForCurve(p.label);
      if (parsed) {
        this.form.setScenario({ ...parsed, distance_m: Math.round(p.distance) });
      }
    });
  }

  private curveScenarios = new Map<string, Scenario>();

  private scenarioForCurve(label: string): Scenario | null {
    return this.curveScenarios.get(label) ?? null;
  }

  async init(): Promise<void> {
    try {
      const [nuclides, classes] = await Promise.all([
        this.api.nuclides(),
        this.api.stabilityClasses(),
      ]);
      this.form.populate(nuclides.nuclides, classes.classes);
      this.clearBanner();
    } catch (err) {
      this.showBanner(`failed to load service metadata: ${String(err)}`);
    }
  }

  showBanner(message: string, kind = "error"): void {
    this.banner.textContent = message;
    this.banner.className = `banner ${kind}`;
  }

  clearBanner(): void {
    this.banner.textContent = "";
    this.banner.className = "banner hidden";
  }

  async submitScenario(scenario: Scenario): Promise<void> {
    this.clearBanner();
    let predict: PredictResponse;
    let profile: ProfileResponse;
    try {
      [predict, profile] = await Promise.all([
        this.api.predict({
          ...scenario,
          models: this.models,
          include_reference: true,
        }),
        this.api.profile({
          radionuclide: scenario.radionuclide,
          stability: scenario.stability,
          release_height_m: scenario.release_height_m,
          distances_m: profileDistances(),
          models: this.models,
          include_reference: true,
        }),
      ]);
    } catch (err) {
      // the form stays editable; the failure is a banner, not a blank panel
      this.showBanner(err instanceof ApiError ? err.message : String(err));
      return;
    }
    this.history.push({ scenario, predict });
    this.renderHistory();
    this.renderComparison(predict);
    try {
      this.renderProfile(scenario, profile);
    } catch (err) {
      this.showBanner(`data error: ${String(err)}`, "data-error");
    }
  }

  renderComparison(predict: PredictResponse): void {
    const doc = this.table.ownerDocument;
    this.table.innerHTML = "";
    const header = doc.createElement("tr");
    for (const title of ["model", "dose (uSv/hr)", "deviation vs reference", "latency (ms)", ""]) {
      const th = doc.createElement("th");
      th.textContent = title;
      header.appendChild(th);
    }
    this.table.appendChild(header);

    if (predict.reference) {
      const tr = doc.createElement("tr");
      tr.className = "reference-row";
      const cells = [
        "reference (quadrature)",
        String(predict.reference.dose_uSv_per_hr),
        "-",
        predict.reference.elapsed_ms.toFixed(1),
        "",
      ];
      for (const text of cells) {
        const td = doc.createElement("td");
        td.textContent = text;
        tr.appendChild(td);
      }
      this.table.appendChild(tr);
    }

    for (const [name, p] of Object.entries(predict.predictions)) {
      const tr = doc.createElement("tr");
      tr.className = `model-row model-${name}`;
      const dose = doc.createElement("td");
      dose.textContent = String(p.dose_uSv_per_hr);
      dose.className = "dose-cell";
      const deviation = doc.createElement("td");
      if (p.deviation_from_reference_percent === null) {
        deviation.textContent = "-";
      } else {
        deviation.textContent = `${p.deviation_from_reference_percent.toFixed(2)}%`;
        deviation.className = deviationClass(Math.abs(p.deviation_from_reference_percent));
      }
      const latency = doc.createElement("td");
      latency.textContent = p.elapsed_ms.toFixed(1);
      const nameCell = doc.createElement("td");
      nameCell.textContent = name;
      const badge = doc.createElement("td");
      if (p.extrapolation) {
        badge.textContent = "extrapolation";
        badge.className = "extrapolation-badge";
      }
      tr.appendChild(nameCell);
      tr.appendChild(dose);
      tr.appendChild(deviation);
      tr.appendChild(latency);
      tr.appendChild(badge);
      this.table.appendChild(tr);
    }
  }

  renderProfile(scenario: Scenario, profile: ProfileResponse): void {
    const series: Series[] = [];
    this.curveScenarios.clear();
    let idx = 0;
    if (profile.reference) {
      const label = "reference";
      series.push({
        label,
        distances: profile.distances_m,
        doses: profile.reference,
        color: seriesColor(idx++),
      });
      this.curveScenarios.set(label, scenario);
    }
    for (const [name, doses] of Object.entries(profile.curves)) {
      series.push({
        label: name,
        distances: profile.distances_m,
        doses,
        color: seriesColor(idx++),
      });
      this.curveScenarios.set(name, scenario);
    }
    this.chart.render(series);
  }

  renderHistory(): void {
    const doc = this.historyList.ownerDocument;
    this.historyList.innerHTML = "";
    this.history.forEach((entry, i) => {
      const li = doc.createElement("li");
      const s = entry.scenario;
      const ref = entry.predict.reference;
      li.textContent =
        `#${i + 1} ${s.radionuclide} ${s.stability} H=${s.release_height_m}m ` +
        `x=${s.distance_m}m` + (ref ? ` ref=${ref.dose_uSv_per_hr}` : "");
      li.className = "history-entry";
      li.addEventListener("click", () => this.form.setScenario(s));
      this.historyList.appendChild(li);
    });
  }

  // what-if sweeps: one /profile call per swept value, overlaid as labeled
  // curves; clicking a point back-fills the form with that curve's scenario
  async sweep(axis: SweepAxis, base: Scenario, values?: (number | string)[]): Promise<void> {
    this.clearBanner();
    this.sweepWarning.className = "sweep-warning hidden";
    let sweepValues: (number | string)[];
    if (values) {
      sweepValues = values;
    } else if (axis === "stability") {
      sweepValues = ["A", "B", "C", "D", "E", "F"];
    } else if (axis === "height") {
      sweepValues = [10, 50, 100, 150, 200];
    } else {
      sweepValues = [100, 250, 500, 1000, 2000];
    }

    const tokens = sweepValues.map((v) => `${axis}=${v}`);
    const scenarios = new Map<string, Scenario>();
    sweepValues.forEach((v, i) => {
      const s: Scenario = { ...base };
      if (axis === "stability") s.stability = String(v);
      else if (axis === "height") s.release_height_m = Number(v);
      else s.distance_m = Number(v);
      scenarios.set(tokens[i], s);
    });

    const results = await fanOut(
      tokens,
      (token) => {
        const s = scenarios.get(token)!;
        return this.api.profile({
          radionuclide: s.radionuclide,
          stability: s.stability,
          release_height_m: s.release_height_m,
          distances_m: profileDistances(),
          models: [this.models[0]],
          include_reference: false,
        });
      },
      4,
    );

    const series: Series[] = [];
    this.curveScenarios.clear();
    const failures: string[] = [];
    results.forEach((r, i) => {
      if (r.error || !r.value) {
        failures.push(r.token);
        return;
      }
      const doses = r.value.curves[this.models[0]];
      series.push({
        label: r.token,
        distances: r.value.distances_m,
        doses,
        color: seriesColor(i),
      });
      this.curveScenarios.set(r.token, scenarios.get(r.token)!);
    });
    try {
      this.chart.render(series);
    } catch (err) {
      this.showBanner(`data error: ${String(err)}`, "data-error");
      return;
    }
    if (failures.length > 0) {
      this.sweepWarning.textContent = `sweep incomplete: ${failures.join(", ")} failed`;
      this.sweepWarning.className = "sweep-warning";
    }
  }

  // live sweep while a slider moves, debounced until the slider rests so the
  // quadrature path is not flooded
  scheduleLiveSubmit(): void {
    if (!this.liveSweep) return;
    if (this.sweepTimer) clearTimeout(this.sweepTimer);
    this.sweepTimer = setTimeout(() => {
      if (this.form.complete()) {
        void this.submitScenario(this.form.scenario());
      }
    }, this.sweepDebounceMs);
  }
}
