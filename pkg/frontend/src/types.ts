// Wire types matching the annotation service.

export type Channel = "pos" | "neg";

export interface RleMask {
  w: number;
  h: number;
  runs: number[];
}

export interface SampleInfo {
  id: string;
  width: number;
  height: number;
  classes: string[];
}

export interface Stroke {
  channel: Channel;
  polyline: [number, number][];
  width: number;
}

export interface PredictResponse {
  round: number;
  mask: RleMask;
  iou?: number;
  dice?: number;
}

export interface SessionLogEntry {
  round: number;
  strokes: Stroke[];
  correction: unknown;
  mask: RleMask;
  iou?: number;
  dice?: number;
}

export interface SessionLog {
  sample_id: string;
  backend: string;
  target_class: string | null;
  round: number;
  log: SessionLogEntry[];
}
