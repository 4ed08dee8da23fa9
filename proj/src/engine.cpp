#include "sdc/engine.hpp"

#include <stdexcept>
#include <string>

#include "sdc/io.hpp"

namespace sdc::engine {

namespace {

void require_double_of(const Grid& child, const Grid& parent, const char* what) {
  if (child.height() != 2 * parent.height() || child.width() != 2 * parent.width()) {
    throw GridError(std::string(what) + ": expected " + std::to_string(2 * parent.height()) +
                    "x" + std::to_string(2 * parent.width()) + ", got " + shape_string(child));
  }
}

}  // namespace

CountGrid guided_upsample(const CountGrid& div_prev, const UpsamplingMap& u) {
  require_double_of(u.grid(), div_prev.grid(), "guided_upsample");
  return CountGrid(hadamard(kron_upsample2(div_prev.grid()), u.grid()));
}

CountGrid merge_step(const CountGrid& div_prev, const CountGrid& counts, const DivisionMask& w,
                     const UpsamplingMap& u) {
  require_double_of(counts.grid(), div_prev.grid(), "merge_step counts");
  require_same_shape(w.grid(), counts.grid(), "merge_step mask");
  const CountGrid up = guided_upsample(div_prev, u);
  Grid out(counts.height(), counts.width());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double wi = w.grid()[i];
    out[i] = (1.0 - wi) * up.grid()[i] + wi * counts.grid()[i];
  }
  return CountGrid(std::move(out));
}

SdcTrace run(const StageModel& model, int stages) {
  if (stages < 0) {
    throw std::invalid_argument("number of division stages must be >= 0");
  }
  SdcTrace trace;
  trace.stages.push_back({model.counter(0), std::nullopt, std::nullopt});
  trace.divs.push_back(trace.stages.front().counts);
  for (int i = 1; i <= stages; ++i) {
    StagePrediction p{model.counter(i), model.decider(i), model.upsampler(i)};
    const CountGrid& prev = trace.divs.back();
    require_double_of(p.counts.grid(), prev.grid(), "stage counts");
    require_same_shape(p.mask->grid(), p.counts.grid(), "stage mask");
    require_same_shape(p.upmap->grid(), p.counts.grid(), "stage upsampling map");
    trace.divs.push_back(merge_step(prev, p.counts, *p.mask, *p.upmap));
    trace.stages.push_back(std::move(p));
  }
  return trace;
}

double image_count(const SdcTrace& trace) {
  if (trace.divs.empty()) {
    throw std::invalid_argument("empty trace");
  }
  return trace.divs.back().sum();
}

void write_trace(const std::filesystem::path& dir, const SdcTrace& trace) {
  for (std::size_t i = 0; i < trace.stages.size(); ++i) {
    const auto idx = std::to_string(i);
    io::write_grid(dir / ("div_" + idx + ".grid"), trace.divs[i].grid());
    io::write_grid(dir / ("c_" + idx + ".grid"), trace.stages[i].counts.grid());
    if (trace.stages[i].mask) {
      io::write_grid(dir / ("w_" + idx + ".grid"), trace.stages[i].mask->grid());
    }
    if (trace.stages[i].upmap) {
      io::write_grid(dir / ("u_" + idx + ".grid"), trace.stages[i].upmap->grid());
    }
  }
}

}  // namespace sdc::engine
