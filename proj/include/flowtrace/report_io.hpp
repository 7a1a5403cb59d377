#pragma once

#include "flowtrace/engine.hpp"

#include <string>

namespace flowtrace {

/// Decimal rendering at 12 significant digits; identical invocations produce
/// identical bytes.
std::string format_number(double v);

/// Write via a temporary file in the same directory plus rename, so readers
/// never observe a partial file.
void atomic_write(const std::string& path, const std::string& content);

/// columns: k,mean_perstep_kl,cum_if_lowerbound,exact_if,epsilon_bound
/// exact_if is blank when no closed form applies; epsilon_bound is blank for
/// scenarios without a watermark detectability floor.
std::string render_ifcurve_csv(const ExperimentSummary& summary);

/// columns: k,alpha,beta,threshold,detector,scenario_id,seed
std::string render_roc_csv(const ExperimentSummary& summary);

/// Minimal standalone SVG line chart of the information-flow curve.
std::string render_if_svg(const ExperimentSummary& summary);

/// Human-readable run summary for the terminal.
std::string render_summary_text(const ExperimentSummary& summary);

} // namespace flowtrace
