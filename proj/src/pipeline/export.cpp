#include "labloop/pipeline/export.hpp"

#include <fmt/format.h>

#include <cctype>

#include "labloop/common/text.hpp"

namespace labloop::pipeline {

std::string latex_escape(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\\') {
      // Keep commands such as \cite{...} intact.
      std::size_t j = i + 1;
      while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
      if (j < text.size() && text[j] == '{') {
        const std::size_t close = text.find('}', j);
        if (close != std::string::npos) {
          out += text.substr(i, close - i + 1);
          i = close;
          continue;
        }
      }
      out += "\\textbackslash{}";
    } else if (c == '%' || c == '&' || c == '#' || c == '_' || c == '$') {
      out += '\\';
      out += c;
    } else if (text.compare(i, 2, "\xC2\xB1") == 0) {
      out += "$\\pm$";
      ++i;
    } else {
      out += c;
    }
  }
  return out;
}

namespace {

std::vector<std::string> table_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::string t = text::trim(line);
  if (!t.empty() && t.front() == '|') t.erase(0, 1);
  if (!t.empty() && t.back() == '|') t.pop_back();
  std::size_t start = 0;
  for (;;) {
    const auto bar = t.find('|', start);
    cells.push_back(text::trim(t.substr(start, bar == std::string::npos ? std::string::npos : bar - start)));
    if (bar == std::string::npos) break;
    start = bar + 1;
  }
  return cells;
}

bool is_rule_row(const std::vector<std::string>& cells) {
  for (const auto& c : cells) {
    if (c.find_first_not_of("-: ") != std::string::npos) return false;
  }
  return true;
}

std::string render_body(const std::string& body) {
  std::string out;
  const auto lines = text::split_lines(body);
  std::string pending_caption;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string t = text::trim(lines[i]);
    if (text::starts_with(t, "Table ") && i + 1 < lines.size() && text::starts_with(text::trim(lines[i + 1]), "|")) {
      // LaTeX numbers the float itself; keep only the caption text.
      const auto colon = t.find(':');
      pending_caption = colon == std::string::npos ? t : text::trim(t.substr(colon + 1));
      continue;
    }
    if (!text::starts_with(t, "|")) {
      out += latex_escape(lines[i]) + "\n";
      continue;
    }
    std::vector<std::vector<std::string>> rows;
    while (i < lines.size() && text::starts_with(text::trim(lines[i]), "|")) {
      auto cells = table_cells(lines[i]);
      if (!is_rule_row(cells)) rows.push_back(std::move(cells));
      ++i;
    }
    --i;
    const std::size_t cols = rows.empty() ? 1 : rows.front().size();
    out += "\\begin{table}[h]\n\\centering\n";
    if (!pending_caption.empty()) out += "\\caption{" + latex_escape(pending_caption) + "}\n";
    out += "\\begin{tabular}{l" + std::string(cols > 1 ? cols - 1 : 0, 'r') + "}\n\\hline\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::vector<std::string> esc;
      for (const auto& c : rows[r]) esc.push_back(latex_escape(c));
      out += text::join(esc, " & ") + " \\\\\n";
      if (r == 0) out += "\\hline\n";
    }
    out += "\\hline\n\\end{tabular}\n\\end{table}\n";
    pending_caption.clear();
  }
  return out;
}

}  // namespace

std::string render_latex(const Json& manuscript, const std::string& template_name) {
  std::string out = "\\documentclass{article}\n";
  out += "% template: " + (template_name.empty() ? std::string("article") : template_name) + "\n";
  out += "\\usepackage{booktabs}\n\\usepackage{amsmath}\n";
  out += "\\title{" + latex_escape(manuscript.value("title", "Untitled")) + "}\n";
  out += "\\begin{document}\n\\maketitle\n";
  for (const auto& s : manuscript.value("sections", Json::array())) {
    const std::string name = s.value("name", "");
    const std::string body = render_body(s.value("text", ""));
    if (text::to_lower(name) == "abstract") {
      out += "\\begin{abstract}\n" + body + "\\end{abstract}\n";
    } else {
      out += "\\section{" + latex_escape(name) + "}\n" + body;
    }
  }
  if (!manuscript.value("bibliography", Json::array()).empty()) {
    out += "\\bibliographystyle{plain}\n\\bibliography{references}\n";
  }
  out += "\\end{document}\n";
  return out;
}

}  // namespace labloop::pipeline
