#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "labloop/common/json.hpp"
#include "labloop/net/transport.hpp"

namespace labloop::verify {

enum class Resolution { Doi, TitleFuzzy, Arxiv, FallbackApi, Unresolved };
enum class Classification { Verified, Suspicious, Hallucinated };
enum class LayerOutcome { Hit, Miss, Error };

std::string to_string(Resolution r);
std::string to_string(Classification c);
std::string to_string(LayerOutcome o);

/// Resolver layers in the order they are tried.
inline const std::vector<std::string> kLayerOrder{"doi", "title_fuzzy", "arxiv", "fallback_api"};

struct LayerAttempt {
  std::string layer;
  LayerOutcome outcome = LayerOutcome::Miss;
  std::string detail;
};

struct CitationRecord {
  std::string key;
  std::string title;
  std::vector<std::string> authors;
  std::optional<int> year;
  std::string venue;
  std::string doi;
  std::string arxiv_id;

  Resolution resolution = Resolution::Unresolved;
  Classification classification = Classification::Suspicious;
  Json resolved = nullptr;  // metadata returned by the resolving layer
  std::vector<LayerAttempt> trace;
  std::vector<std::string> warnings;

  static CitationRecord from_json(const Json& j);
  Json to_json() const;
  /// The bibliography entry fields only.
  Json to_bib_entry() const;
};

struct ResolverEndpoints {
  std::string crossref = "https://api.crossref.org";
  std::string openalex = "https://api.openalex.org";
  std::string arxiv = "http://export.arxiv.org";
  std::string semantic_scholar = "https://api.semanticscholar.org";
  double title_threshold = 0.90;
};

/// Returns whether a resolved reference fits the way the manuscript uses it.
/// Throwing counts as an inconclusive check.
using RelevanceFn = std::function<bool(const CitationRecord&)>;

/// 1 - levenshtein / max_len over lowercased alphanumeric words joined by single spaces.
double title_similarity(const std::string& a, const std::string& b);

/// Tries the layers in kLayerOrder and stops at the first hit. A resolved
/// record is Verified when the relevance check passes and Suspicious when it
/// fails. An unresolved record is Hallucinated when every layer answered with
/// a miss and Suspicious when any layer failed at the network level.
CitationRecord verify_citation(CitationRecord rec, net::Transport& transport, const ResolverEndpoints& endpoints,
                               const RelevanceFn& relevance = nullptr);

struct BibliographyReport {
  std::vector<CitationRecord> records;
  std::vector<std::string> removed;  // keys of Hallucinated records
  Json manuscript;                   // bibliography and \cite keys cleaned

  Json summary() const;
  Json to_json() const;
};

BibliographyReport verify_bibliography(const Json& manuscript, net::Transport& transport,
                                       const ResolverEndpoints& endpoints, const RelevanceFn& relevance = nullptr);

/// Drops `keys` from every \cite-family command; commands left empty disappear.
std::string strip_citations(const std::string& text, const std::set<std::string>& keys);

std::string to_bibtex(const Json& bibliography);

}  // namespace labloop::verify
