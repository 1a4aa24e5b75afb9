// Scenario entry form: nuclide and stability selectors, height and distance
// sliders mirroring the training-table ranges. Submit stays disabled until
// every field holds a value.

export interface Scenario {
  radionuclide: string;
  stability: string;
  release_height_m: number;
  distance_m: number;
}

export const HEIGHT_MIN = 10;
export const HEIGHT_MAX = 200;
export const HEIGHT_STEP = 10;
export const DISTANCE_MIN = 25;
export const DISTANCE_MAX = 2000;

export class ScenarioForm {
  readonly root: HTMLFormElement;
  readonly nuclideSelect: HTMLSelectElement;
  readonly stabilitySelect: HTMLSelectElement;
  readonly heightSlider: HTMLInputElement;
  readonly distanceSlider: HTMLInputElement;
  readonly heightValue: HTMLSpanElement;
  readonly distanceValue: HTMLSpanElement;
  readonly submitButton: HTMLButtonElement;
  private submitHandler: ((s: Scenario) => void) | null = null;
  private changeHandler: (() => void) | null = null;

  constructor(doc: Document = document) {
    this.root = doc.createElement("form");
    this.root.className = "scenario-form";

    this.nuclideSelect = doc.createElement("select");
    this.nuclideSelect.name = "radionuclide";
    this.stabilitySelect = doc.createElement("select");
    this.stabilitySelect.name = "stability";

    this.heightSlider = doc.createElement("input");
    this.heightSlider.type = "range";
    this.heightSlider.name = "release_height_m";
    this.heightSlider.min = String(HEIGHT_MIN);
    this.heightSlider.max = String(HEIGHT_MAX);
    this.heightSlider.step = String(HEIGHT_STEP);

    this.distanceSlider = doc.createElement("input");
    this.distanceSlider.type = "range";
    this.distanceSlider.name = "distance_m";
    this.distanceSlider.min = String(DISTANCE_MIN);
    this.distanceSlider.max = String(DISTANCE_MAX);
    this.distanceSlider.step = "1";

    this.heightValue = doc.createElement("span");
    this.heightValue.className = "height-value";
    this.distanceValue = doc.createElement("span");
    this.distanceValue.className = "distance-value";

    this.submitButton = doc.createElement("button");
    this.submitButton.type = "submit";
    this.submitButton.textContent = "Evaluate scenario";
    this.submitButton.disabled = true;

    const rows: Array<[string, HTMLElement, HTMLElement | null]> = [
      ["Radionuclide", this.nuclideSelect, null],
      ["Stability class", this.stabilitySelect, null],
      ["Release height (m)", this.heightSlider, this.heightValue],
      ["Downwind distance (m)", this.distanceSlider, this.distanceValue],
    ];
    for (const [title, control, value] of rows) {
      const label = doc.createElement("label");
      label.textContent = title + " ";
      label.appendChild(control);
      if (value) label.appendChild(value);
      this.root.appendChild(label);
    }
    this.root.appendChild(this.submitButton);

    const refresh = () => this.refresh();
    this.nuclideSelect.addEventListener("change", refresh);
    this.stabilitySelect.addEventListener("change", refresh);
    this.heightSlider.addEventListener("input", refresh);
    this.distanceSlider.addEventListener("input", refresh);
    this.root.addEventListener("submit", (ev) => {
      ev.preventDefault();
      if (!this.submitButton.disabled && this.submitHandler) {
        this.submitHandler(this.scenario());
      }
    });
  }

  populate(nuclides: string[], classes: string[]): void {
    const doc = this.root.ownerDocument;
    const placeholder = (select: HTMLSelectElement, text: string) => {
      const opt = doc.createElement("option");
      opt.value = "";
      opt.textContent = text;
      select.appendChild(opt);
    };
    this.nuclideSelect.innerHTML = "";
    placeholder(this.nuclideSelect, "choose nuclide");
    for (const n of nuclides) {
      const opt = doc.createElement("option");
      opt.value = n;
      opt.textContent = n;
      this.nuclideSelect.appendChild(opt);
    }
    this.stabilitySelect.innerHTML = "";
    placeholder(this.stabilitySelect, "choose class");
    for (const c of classes) {
      const opt = doc.createElement("option");
      opt.value = c;
      opt.textContent = c;
      this.stabilitySelect.appendChild(opt);
    }
    this.refresh();
  }

  refresh(): void {
    this.heightValue.textContent = this.heightSlider.value;
    this.distanceValue.textContent = this.distanceSlider.value;
    this.submitButton.disabled = !this.complete();
    this.changeHandler?.();
  }

  complete(): boolean {
    return (
      this.nuclideSelect.value !== "" &&
      this.stabilitySelect.value !== "" &&
      this.heightSlider.value !== "" &&
      this.distanceSlider.value !== ""
    );
  }

  scenario(): Scenario {
    return {
      radionuclide: this.nuclideSelect.value,
      stability: this.stabilitySelect.value,
      release_height_m: Number(this.heightSlider.value),
      distance_m: Number(this.distanceSlider.value),
    };
  }

  setScenario(s: Scenario): void {
    this.nuclideSelect.value = s.radionuclide;
    this.stabilitySelect.value = s.stability;
    this.heightSlider.value = String(s.release_height_m);
    this.distanceSlider.value = String(s.distance_m);
    this.refresh();
  }

  onSubmit(handler: (s: Scenario) => void): void {
    this.submitHandler = handler;
  }

  onChange(handler: () => void): void {
    this.changeHandler = handler;
  }
}
