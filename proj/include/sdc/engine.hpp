#pragma once

// Multi-stage spatial divide-and-conquer over pluggable stage callables.

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "sdc/grid.hpp"

namespace sdc::engine {

struct StagePrediction {
  CountGrid counts;                    // C_i
  std::optional<DivisionMask> mask;    // W_i, absent at stage 0
  std::optional<UpsamplingMap> upmap;  // U_i, absent at stage 0
};

struct SdcTrace {
  std::vector<StagePrediction> stages;
  std::vector<CountGrid> divs;  // DIV_0 .. DIV_N
};

/// Counter, division decider and upsampler, each queried by stage index.
/// The decider and upsampler are only called for stages >= 1.
struct StageModel {
  std::function<CountGrid(int stage)> counter;
  std::function<DivisionMask(int stage)> decider;
  std::function<UpsamplingMap(int stage)> upsampler;
};

/// (DIV_{i-1} (x) 1_{2x2}) o U_i.
CountGrid guided_upsample(const CountGrid& div_prev, const UpsamplingMap& u);

/// (1 - W_i) o guided_upsample(DIV_{i-1}, U_i) + W_i o C_i.
CountGrid merge_step(const CountGrid& div_prev, const CountGrid& counts, const DivisionMask& w,
                     const UpsamplingMap& u);

/// DIV_0 = C_0, then DIV_i = merge_step(DIV_{i-1}, C_i, W_i, U_i) for i = 1..n.
SdcTrace run(const StageModel& model, int stages);

/// Sum of the final division map.
double image_count(const SdcTrace& trace);

/// Writes div_<i>.grid, c_<i>.grid and, for i >= 1, w_<i>.grid and u_<i>.grid.
void write_trace(const std::filesystem::path& dir, const SdcTrace& trace);

}  // namespace sdc::engine
