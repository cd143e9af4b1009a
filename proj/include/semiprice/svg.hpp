#pragma once

#include <json.hpp>

#include <string>

namespace semiprice::svg {

//! Renders the transformed-regret curves from a summary document as a
//! self-contained SVG: one line per policy with a shaded standard-error band
//! and dashed benchmark slope lines.  With a single checkpoint only the
//! points are drawn.  Throws std::runtime_error when the summary holds no
//! plottable policy.
std::string render_regret_plot(const nlohmann::json& summary);

}  // namespace semiprice::svg
