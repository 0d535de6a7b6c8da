#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "labloop/common/fs.hpp"
#include "labloop/common/json.hpp"
#include "labloop/executor/bundle.hpp"

namespace labloop::executor {

enum class Severity { Error, Warning };
std::string to_string(Severity s);

struct ValidationRuleset {
  std::set<std::string> forbidden_calls;
  std::set<std::string> banned_builtins;
  std::set<std::string> module_blacklist;
  std::set<std::string> import_allowlist;  // empty disables the allowlist check
  std::set<std::string> report_functions{"report_metric"};
  std::map<std::string, Severity> severity;

  static ValidationRuleset defaults();
  static ValidationRuleset load(const fs::path& file);
  Severity severity_of(const std::string& rule) const;
};

struct Finding {
  std::string rule;  // syntax, forbidden_call, banned_builtin, module_blacklist, import_not_allowlisted, ...
  std::string file;
  int line = 0;
  Severity severity = Severity::Error;
  std::string message;

  Json to_json() const;
};

struct CodeReport {
  std::vector<Finding> findings;

  bool ok() const;  // no error-severity findings
  std::size_t errors() const;
  std::size_t warnings() const;
  Json to_json() const;
};

/// Python source token. Comments and layout are dropped; NEWLINE marks the
/// end of a logical line.
struct PyToken {
  enum Kind { Name, Number, String, Op, Newline } kind;
  std::string text;
  int line = 0;
};

struct PyLexResult {
  std::vector<PyToken> tokens;
  std::vector<std::string> errors;  // "line N: message"
};

PyLexResult lex_python(const std::string& source);

/// Static checks over every .py file: syntax, forbidden calls, banned
/// builtins, blacklisted and non-allowlisted imports, declared conditions with
/// identical implementations, and literal values flowing into the metric
/// report call.
CodeReport validate_code(const CodeBundle& bundle, const ValidationRuleset& rules);

}  // namespace labloop::executor
