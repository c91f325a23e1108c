#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "layerinfo/run/experiment.hpp"

namespace layerinfo::run {

enum class FigureKind { distribution, per_layer, cumulative, bar_auroc };

std::string to_string(FigureKind kind);
FigureKind parse_figure_kind(std::string_view name);

// Writes one SVG and the CSV it was drawn from per requested kind into `dir`
// and returns the written paths. Per-layer kinds need LI profiles and the
// AUROC bars need at least one defined AUROC; otherwise InsufficientData.
//   distribution  per-example LI, one series per (template, answerability)
//   per_layer     mean I_l per layer and series
//   cumulative    mean prefix sums of I_l per layer and series
//   bar_auroc     AUROC per (method, template)
std::vector<std::filesystem::path> emit_figures(const EvalReport& report, const std::set<FigureKind>& kinds,
                                                const std::filesystem::path& dir);

}  // namespace layerinfo::run
