/** Contribution-bar view model: the report has one row per concept, which
 * is more than a screen wants; show the top rows and roll the rest up. */

import type { ContributionEntry } from "./api.js";

export interface ContributionBar {
  label: string;
  percent: number;
  isRollup: boolean;
}

export const TOP_CONTRIBUTIONS = 15;

export function rollUpContributions(
  rows: ContributionEntry[],
  limit: number = TOP_CONTRIBUTIONS,
): ContributionBar[] {
  const bars: ContributionBar[] = rows.slice(0, limit).map((r) => ({
    label: r.concept_name,
    percent: r.contribution_percent,
    isRollup: false,
  }));
  const rest = rows.slice(limit);
  if (rest.length > 0) {
    bars.push({
      label: `others (${rest.length})`,
      percent: rest.reduce((acc, r) => acc + r.contribution_percent, 0),
      isRollup: true,
    });
  }
  return bars;
}
