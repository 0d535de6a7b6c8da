#pragma once

#include <string>

#include "labloop/common/json.hpp"

namespace labloop::pipeline {

/// LaTeX source for a manuscript {title, sections: [{name, text}], bibliography}.
/// Markdown tables ("| a | b |") become tabular environments.
std::string render_latex(const Json& manuscript, const std::string& template_name);

/// Escapes LaTeX specials outside \command{...} spans.
std::string latex_escape(const std::string& text);

}  // namespace labloop::pipeline
