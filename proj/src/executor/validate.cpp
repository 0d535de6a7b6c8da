#include "labloop/executor/validate.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fmt/format.h>

#include "labloop/common/error.hpp"

namespace labloop::executor {

std::string to_string(Severity s) { return s == Severity::Error ? "error" : "warning"; }

ValidationRuleset ValidationRuleset::defaults() {
  ValidationRuleset r;
  r.forbidden_calls = {"os.system", "os.popen", "subprocess.run", "shutil.rmtree"};
  r.banned_builtins = {"eval", "exec", "compile", "__import__"};
  r.module_blacklist = {"subprocess", "socket", "http", "urllib", "requests", "ftplib", "smtplib", "ctypes", "signal"};
  r.severity = {{"syntax", Severity::Error},         {"forbidden_call", Severity::Error},
                {"banned_builtin", Severity::Error}, {"module_blacklist", Severity::Error},
                {"import_not_allowlisted", Severity::Warning}, {"identical_ablation", Severity::Error},
                {"hardcoded_metric", Severity::Error}};
  return r;
}

ValidationRuleset ValidationRuleset::load(const fs::path& file) {
  const Json j = Json::parse(read_file(file));
  ValidationRuleset r = defaults();
  auto set_of = [&](const char* key, std::set<std::string>& out) {
    if (j.contains(key)) out = j[key].get<std::set<std::string>>();
  };
  set_of("forbidden_calls", r.forbidden_calls);
  set_of("banned_builtins", r.banned_builtins);
  set_of("module_blacklist", r.module_blacklist);
  set_of("import_allowlist", r.import_allowlist);
  set_of("report_functions", r.report_functions);
  const Json severity_doc = j.value("severity", Json::object());
  for (const auto& [rule, sev] : severity_doc.items()) {
    const std::string s = sev.get<std::string>();
    if (s != "error" && s != "warning") throw ConfigError("severity must be error or warning: " + rule);
    r.severity[rule] = s == "error" ? Severity::Error : Severity::Warning;
  }
  return r;
}

Severity ValidationRuleset::severity_of(const std::string& rule) const {
  auto it = severity.find(rule);
  return it == severity.end() ? Severity::Error : it->second;
}

Json Finding::to_json() const {
  return {{"rule", rule}, {"file", file}, {"line", line}, {"severity", to_string(severity)}, {"message", message}};
}

bool CodeReport::ok() const { return errors() == 0; }

std::size_t CodeReport::errors() const {
  return static_cast<std::size_t>(
      std::count_if(findings.begin(), findings.end(), [](const Finding& f) { return f.severity == Severity::Error; }));
}

std::size_t CodeReport::warnings() const { return findings.size() - errors(); }

Json CodeReport::to_json() const {
  Json f = Json::array();
  for (const auto& x : findings) f.push_back(x.to_json());
  return {{"findings", f}, {"errors", errors()}, {"warnings", warnings()}};
}

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

PyLexResult lex_python(const std::string& src) {
  PyLexResult out;
  std::vector<std::pair<char, int>> brackets;
  int line = 1;
  std::size_t i = 0;
  auto push = [&](PyToken::Kind k, std::string text) { out.tokens.push_back({k, std::move(text), line}); };

  while (i < src.size()) {
    const char c = src[i];
    if (c == '\n') {
      if (brackets.empty() && !out.tokens.empty() && out.tokens.back().kind != PyToken::Newline) push(PyToken::Newline, "");
      ++line;
      ++i;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r' || c == '\f') {
      ++i;
      continue;
    }
    if (c == '\\' && i + 1 < src.size() && src[i + 1] == '\n') {
      ++line;
      i += 2;
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    // String literal, possibly prefixed (r, b, f, u, rb, ...).
    std::size_t q = i;
    while (q < src.size() && q - i < 2 && std::strchr("rRbBuUfF", src[q]) && src[q] != '\0') ++q;
    if (q < src.size() && (src[q] == '"' || src[q] == '\'') && (q == i || !ident_char(i > 0 ? src[i - 1] : ' '))) {
      const char quote = src[q];
      const bool triple = q + 2 < src.size() && src[q + 1] == quote && src[q + 2] == quote;
      const int start_line = line;
      std::size_t j = q + (triple ? 3 : 1);
      bool closed = false;
      while (j < src.size()) {
        if (src[j] == '\\') {
          if (j + 1 < src.size() && src[j + 1] == '\n') ++line;
          j += 2;
          continue;
        }
        if (src[j] == '\n') {
          if (!triple) break;
          ++line;
        }
        if (src[j] == quote) {
          if (!triple) {
            closed = true;
            ++j;
            break;
          }
          if (j + 2 < src.size() && src[j + 1] == quote && src[j + 2] == quote) {
            closed = true;
            j += 3;
            break;
          }
        }
        ++j;
      }
      if (!closed) {
        out.errors.push_back(fmt::format("line {}: unterminated string literal", start_line));
        i = j;
        continue;
      }
      out.tokens.push_back({PyToken::String, src.substr(i, j - i), start_line});
      i = j;
      continue;
    }
    if (ident_start(c)) {
      std::size_t j = i;
      while (j < src.size() && ident_char(src[j])) ++j;
      push(PyToken::Name, src.substr(i, j - i));
      i = j;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i;
      while (j < src.size() && (ident_char(src[j]) || src[j] == '.' ||
                                ((src[j] == '+' || src[j] == '-') && (src[j - 1] == 'e' || src[j - 1] == 'E')))) {
        ++j;
      }
      push(PyToken::Number, src.substr(i, j - i));
      i = j;
      continue;
    }
    if (c == '(' || c == '[' || c == '{') {
      brackets.emplace_back(c, line);
      push(PyToken::Op, std::string(1, c));
      ++i;
      continue;
    }
    if (c == ')' || c == ']' || c == '}') {
      const char open = c == ')' ? '(' : c == ']' ? '[' : '{';
      if (brackets.empty() || brackets.back().first != open) {
        out.errors.push_back(fmt::format("line {}: unmatched '{}'", line, c));
      } else {
        brackets.pop_back();
      }
      push(PyToken::Op, std::string(1, c));
      ++i;
      continue;
    }
    static const char* multi[] = {"**=", "//=", ">>=", "<<=", "->", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
                                  "==", "!=", "<=", ">=", "**", "//", "<<", ">>", ":=", "@="};
    bool matched = false;
    for (const char* m : multi) {
      const std::size_t n = std::strlen(m);
      if (src.compare(i, n, m) == 0) {
        push(PyToken::Op, m);
        i += n;
        matched = true;
        break;
      }
    }
    if (!matched) {
      push(PyToken::Op, std::string(1, c));
      ++i;
    }
  }
  for (const auto& [b, l] : brackets) out.errors.push_back(fmt::format("line {}: '{}' is never closed", l, b));
  if (!out.tokens.empty() && out.tokens.back().kind != PyToken::Newline) out.tokens.push_back({PyToken::Newline, "", line});
  return out;
}

namespace {

using Tokens = std::vector<PyToken>;

std::string root_module(const std::string& dotted) { return dotted.substr(0, dotted.find('.')); }

// Reads a dotted name starting at tokens[i]; advances i past it.
std::string dotted_name(const Tokens& t, std::size_t& i) {
  std::string name = t[i].text;
  ++i;
  while (i + 1 < t.size() && t[i].kind == PyToken::Op && t[i].text == "." && t[i + 1].kind == PyToken::Name) {
    name += "." + t[i + 1].text;
    i += 2;
  }
  return name;
}

struct FileChecker {
  const std::string& file;
  const ValidationRuleset& rules;
  std::vector<Finding>& findings;

  void add(const std::string& rule, int line, std::string message) {
    findings.push_back({rule, file, line, rules.severity_of(rule), std::move(message)});
  }

  void check_import(const std::string& module, int line) {
    const std::string root = root_module(module);
    if (rules.module_blacklist.count(root)) {
      add("module_blacklist", line, "import of blacklisted module " + module);
    } else if (!rules.import_allowlist.empty() && !rules.import_allowlist.count(root)) {
      add("import_not_allowlisted", line, "module " + module + " is not on the import allowlist");
    }
  }

  void run(const Tokens& t) {
    // alias -> fully qualified name, from import statements.
    std::map<std::string, std::string> alias;
    bool line_start = true;
    for (std::size_t i = 0; i < t.size();) {
      const PyToken& tok = t[i];
      if (tok.kind == PyToken::Newline) {
        line_start = true;
        ++i;
        continue;
      }
      if (line_start && tok.kind == PyToken::Name && tok.text == "import") {
        ++i;
        while (i < t.size() && t[i].kind == PyToken::Name) {
          const int line = t[i].line;
          const std::string mod = dotted_name(t, i);
          std::string as = root_module(mod);
          std::string target = root_module(mod);
          if (i + 1 < t.size() && t[i].text == "as" && t[i + 1].kind == PyToken::Name) {
            as = t[i + 1].text;
            target = mod;
            i += 2;
          }
          alias[as] = target;
          check_import(mod, line);
          if (i < t.size() && t[i].text == ",") ++i;
        }
        line_start = false;
        continue;
      }
      if (line_start && tok.kind == PyToken::Name && tok.text == "from") {
        ++i;
        std::string mod;
        while (i < t.size() && t[i].kind == PyToken::Op && t[i].text == ".") {
          mod += ".";
          ++i;
        }
        if (i < t.size() && t[i].kind == PyToken::Name && t[i].text != "import") mod += dotted_name(t, i);
        if (!mod.empty() && mod.front() != '.') check_import(mod, tok.line);
        if (i < t.size() && t[i].text == "import") {
          ++i;
          while (i < t.size() && t[i].kind != PyToken::Newline) {
            if (t[i].kind == PyToken::Name) {
              std::string name = t[i].text;
              std::string as = name;
              if (i + 2 < t.size() && t[i + 1].text == "as" && t[i + 2].kind == PyToken::Name) {
                as = t[i + 2].text;
                i += 2;
              }
              alias[as] = mod + "." + name;
            }
            ++i;
          }
        }
        line_start = false;
        continue;
      }
      line_start = false;
      if (tok.kind == PyToken::Name) {
        const bool attribute = i > 0 && t[i - 1].kind == PyToken::Op && t[i - 1].text == ".";
        const bool definition = i > 0 && t[i - 1].kind == PyToken::Name && (t[i - 1].text == "def" || t[i - 1].text == "class");
        std::size_t j = i;
        std::string name = dotted_name(t, j);
        const bool call = j < t.size() && t[j].kind == PyToken::Op && t[j].text == "(";
        if (call && !attribute && !definition) {
          const std::string head = root_module(name);
          std::string resolved = name;
          if (alias.count(head)) resolved = alias[head] + name.substr(head.size());
          if (rules.forbidden_calls.count(resolved)) {
            add("forbidden_call", tok.line, "call to forbidden function " + resolved);
          } else if (name.find('.') == std::string::npos && rules.banned_builtins.count(name)) {
            add("banned_builtin", tok.line, "call to banned builtin " + name);
          }
        }
        i = j;
        continue;
      }
      ++i;
    }
  }
};

std::vector<std::string> source_lines(const std::string& src) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= src.size()) {
    std::size_t nl = src.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(src.substr(start));
      break;
    }
    lines.push_back(src.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::size_t indent_of(const std::string& line) {
  std::size_t n = 0;
  while (n < line.size() && (line[n] == ' ' || line[n] == '\t')) ++n;
  return n;
}

bool blank_or_comment(const std::string& line) {
  const std::size_t n = indent_of(line);
  return n == line.size() || line[n] == '#';
}

struct FunctionBody {
  std::string file;
  int line = 0;
  std::string normalized;
};

// Top-level and nested `def` bodies keyed by function name, normalized to
// their token stream with the function's own name removed.
std::map<std::string, FunctionBody> function_bodies(const std::string& file, const std::string& src) {
  std::map<std::string, FunctionBody> out;
  const auto lines = source_lines(src);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& l = lines[i];
    const std::size_t ind = indent_of(l);
    if (l.compare(ind, 4, "def ") != 0) continue;
    std::size_t p = ind + 4;
    while (p < l.size() && l[p] == ' ') ++p;
    std::size_t e = p;
    while (e < l.size() && ident_char(l[e])) ++e;
    const std::string name = l.substr(p, e - p);
    const std::size_t paren = l.find('(', e);
    std::string body = paren == std::string::npos ? "" : l.substr(paren);
    std::size_t k = i + 1;
    for (; k < lines.size(); ++k) {
      if (blank_or_comment(lines[k])) continue;
      if (indent_of(lines[k]) <= ind) break;
      body += "\n" + lines[k];
    }
    std::string norm;
    for (const auto& tok : lex_python(body).tokens) {
      if (tok.kind == PyToken::Newline) {
        norm += ";";
        continue;
      }
      norm += (tok.text == name ? std::string("<self>") : tok.text) + " ";
    }
    out[name] = {file, static_cast<int>(i + 1), norm};
  }
  return out;
}

std::string condition_identifier(const std::string& cond) {
  std::string id;
  for (char c : cond) id.push_back(ident_char(c) ? static_cast<char>(std::tolower(static_cast<unsigned char>(c))) : '_');
  return id;
}

void check_identical_ablations(const CodeBundle& bundle, const ValidationRuleset& rules, std::vector<Finding>& findings) {
  std::map<std::string, FunctionBody> bodies;
  for (const auto& [path, src] : bundle.files) {
    if (path.size() < 3 || path.compare(path.size() - 3, 3, ".py") != 0) continue;
    for (auto& [name, body] : function_bodies(path, src)) bodies.emplace(name, body);
  }
  std::vector<std::pair<std::string, const FunctionBody*>> impls;
  for (const auto& cond : bundle.declared_conditions) {
    const std::string id = condition_identifier(cond);
    for (const std::string& candidate : {id, "run_" + id, "condition_" + id, "method_" + id, id + "_condition"}) {
      auto it = bodies.find(candidate);
      if (it != bodies.end()) {
        impls.emplace_back(cond, &it->second);
        break;
      }
    }
  }
  for (std::size_t a = 0; a < impls.size(); ++a) {
    for (std::size_t b = a + 1; b < impls.size(); ++b) {
      if (impls[a].second->normalized == impls[b].second->normalized) {
        findings.push_back({"identical_ablation", impls[b].second->file, impls[b].second->line,
                            rules.severity_of("identical_ablation"),
                            fmt::format("conditions '{}' and '{}' have identical implementations", impls[a].first,
                                        impls[b].first)});
      }
    }
  }
}

void check_hardcoded_metrics(const std::string& file, const Tokens& t, const ValidationRuleset& rules,
                             std::vector<Finding>& findings) {
  // Names whose every assignment is a bare numeric literal.
  std::map<std::string, bool> literal;
  bool line_start = true;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i].kind == PyToken::Newline) {
      line_start = true;
      continue;
    }
    if (line_start && t[i].kind == PyToken::Name && i + 1 < t.size() && t[i + 1].kind == PyToken::Op) {
      const std::string& op = t[i + 1].text;
      if (op == "=") {
        std::size_t j = i + 2;
        if (j < t.size() && (t[j].text == "-" || t[j].text == "+")) ++j;
        const bool lit = j + 1 < t.size() && t[j].kind == PyToken::Number && t[j + 1].kind == PyToken::Newline;
        auto it = literal.find(t[i].text);
        literal[t[i].text] = lit && (it == literal.end() || it->second);
      } else if (op.size() == 2 && op[1] == '=' && op != "==" && op != "!=" && op != "<=" && op != ">=") {
        literal[t[i].text] = false;
      }
    }
    line_start = false;
  }

  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    if (t[i].kind != PyToken::Name || !rules.report_functions.count(t[i].text) || t[i + 1].text != "(") continue;
    if (i > 0 && t[i - 1].kind == PyToken::Name && t[i - 1].text == "def") continue;
    std::vector<std::vector<const PyToken*>> args(1);
    int depth = 0;
    std::size_t j = i + 2;
    for (; j < t.size(); ++j) {
      const std::string& s = t[j].text;
      if (t[j].kind == PyToken::Op && (s == "(" || s == "[" || s == "{")) ++depth;
      if (t[j].kind == PyToken::Op && (s == ")" || s == "]" || s == "}")) {
        if (depth == 0) break;
        --depth;
      }
      if (depth == 0 && t[j].kind == PyToken::Op && s == ",") {
        args.emplace_back();
        continue;
      }
      args.back().push_back(&t[j]);
    }
    std::vector<const PyToken*> value;
    std::size_t positional = 0;
    for (auto& a : args) {
      if (a.size() >= 2 && a[0]->kind == PyToken::Name && a[1]->text == "=") {
        if (a[0]->text == "value") value.assign(a.begin() + 2, a.end());
        continue;
      }
      if (positional++ == 2) value = a;
    }
    if (!value.empty() && (value[0]->text == "-" || value[0]->text == "+")) value.erase(value.begin());
    if (value.size() != 1) continue;
    const bool hard = value[0]->kind == PyToken::Number ||
                      (value[0]->kind == PyToken::Name && literal.count(value[0]->text) && literal[value[0]->text]);
    if (hard) {
      findings.push_back({"hardcoded_metric", file, t[i].line, rules.severity_of("hardcoded_metric"),
                          "metric value " + value[0]->text + " is a literal, not a measurement"});
    }
  }
}

}  // namespace

CodeReport validate_code(const CodeBundle& bundle, const ValidationRuleset& rules) {
  CodeReport report;
  for (const auto& [path, src] : bundle.files) {
    if (path.size() < 3 || path.compare(path.size() - 3, 3, ".py") != 0) continue;
    auto lexed = lex_python(src);
    for (const auto& e : lexed.errors) {
      int line = 0;
      std::sscanf(e.c_str(), "line %d", &line);
      report.findings.push_back({"syntax", path, line, rules.severity_of("syntax"), e});
    }
    FileChecker{path, rules, report.findings}.run(lexed.tokens);
    check_hardcoded_metrics(path, lexed.tokens, rules, report.findings);
  }
  check_identical_ablations(bundle, rules, report.findings);
  return report;
}

}  // namespace labloop::executor
