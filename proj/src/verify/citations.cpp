#include "labloop/verify/citations.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <regex>

#include "labloop/common/error.hpp"
#include "labloop/common/text.hpp"

namespace labloop::verify {

std::string to_string(Resolution r) {
  switch (r) {
    case Resolution::Doi: return "doi";
    case Resolution::TitleFuzzy: return "title_fuzzy";
    case Resolution::Arxiv: return "arxiv";
    case Resolution::FallbackApi: return "fallback_api";
    case Resolution::Unresolved: return "unresolved";
  }
  return "unresolved";
}

std::string to_string(Classification c) {
  switch (c) {
    case Classification::Verified: return "Verified";
    case Classification::Suspicious: return "Suspicious";
    case Classification::Hallucinated: return "Hallucinated";
  }
  return "Suspicious";
}

std::string to_string(LayerOutcome o) {
  switch (o) {
    case LayerOutcome::Hit: return "hit";
    case LayerOutcome::Miss: return "miss";
    case LayerOutcome::Error: return "error";
  }
  return "miss";
}

CitationRecord CitationRecord::from_json(const Json& j) {
  CitationRecord r;
  r.key = j.at("key").get<std::string>();
  r.title = j.value("title", "");
  if (j.contains("authors")) {
    if (j["authors"].is_array()) {
      r.authors = j["authors"].get<std::vector<std::string>>();
    } else {
      r.authors = {j["authors"].get<std::string>()};
    }
  }
  if (j.contains("year") && j["year"].is_number_integer()) r.year = j["year"].get<int>();
  r.venue = j.value("venue", "");
  r.doi = j.value("doi", "");
  r.arxiv_id = j.value("arxiv", "");
  return r;
}

Json CitationRecord::to_bib_entry() const {
  Json j{{"key", key}, {"title", title}, {"authors", authors}};
  if (year) j["year"] = *year;
  if (!venue.empty()) j["venue"] = venue;
  if (!doi.empty()) j["doi"] = doi;
  if (!arxiv_id.empty()) j["arxiv"] = arxiv_id;
  return j;
}

Json CitationRecord::to_json() const {
  Json j = to_bib_entry();
  j["resolution"] = to_string(resolution);
  j["classification"] = to_string(classification);
  j["resolved"] = resolved;
  Json tr = Json::array();
  for (const auto& a : trace) tr.push_back({{"layer", a.layer}, {"outcome", to_string(a.outcome)}, {"detail", a.detail}});
  j["trace"] = tr;
  j["warnings"] = warnings;
  return j;
}

double title_similarity(const std::string& a, const std::string& b) {
  const std::string x = text::join(text::word_tokens(a), " ");
  const std::string y = text::join(text::word_tokens(b), " ");
  if (x.empty() && y.empty()) return 1.0;
  std::vector<std::size_t> prev(y.size() + 1), cur(y.size() + 1);
  for (std::size_t j = 0; j <= y.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= x.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return 1.0 - static_cast<double>(prev[y.size()]) / static_cast<double>(std::max(x.size(), y.size()));
}

namespace {

struct LayerResult {
  LayerOutcome outcome = LayerOutcome::Miss;
  std::string detail;
  Json metadata = nullptr;
};

LayerResult fetch(net::Transport& transport, const std::string& url, Json* body_json, std::string* body_text) {
  net::HttpResponse resp;
  try {
    resp = transport.send({"GET", url, {{"Accept", "application/json"}}, ""});
  } catch (const TransportError& e) {
    return {LayerOutcome::Error, e.what()};
  }
  if (resp.status == 429 || resp.status >= 500) return {LayerOutcome::Error, fmt::format("HTTP {}", resp.status)};
  if (resp.status != 200) return {LayerOutcome::Miss, fmt::format("HTTP {}", resp.status)};
  if (body_text) *body_text = resp.body;
  if (body_json) {
    try {
      *body_json = Json::parse(resp.body);
    } catch (const Json::exception&) {
      return {LayerOutcome::Error, "unparseable response"};
    }
  }
  return {LayerOutcome::Hit, ""};
}

LayerResult best_title(const Json& candidates, const std::string& title, double threshold) {
  double best = 0.0;
  Json best_item = nullptr;
  for (const auto& item : candidates) {
    std::string t;
    if (item.contains("title") && item["title"].is_string()) t = item["title"].get<std::string>();
    if (item.contains("display_name") && t.empty() && item["display_name"].is_string()) t = item["display_name"];
    const double s = title_similarity(title, t);
    if (s > best) {
      best = s;
      best_item = item;
    }
  }
  if (best >= threshold) return {LayerOutcome::Hit, fmt::format("similarity {:.3f}", best), best_item};
  return {LayerOutcome::Miss, fmt::format("best similarity {:.3f}", best)};
}

LayerResult try_doi(const CitationRecord& rec, net::Transport& t, const ResolverEndpoints& ep) {
  if (rec.doi.empty()) return {LayerOutcome::Miss, "no DOI"};
  Json body;
  LayerResult r = fetch(t, ep.crossref + "/works/" + net::url_encode(rec.doi), &body, nullptr);
  if (r.outcome != LayerOutcome::Hit) return r;
  if (!body.contains("message")) return {LayerOutcome::Miss, "no message"};
  r.metadata = body["message"];
  return r;
}

LayerResult try_title(const CitationRecord& rec, net::Transport& t, const ResolverEndpoints& ep) {
  if (rec.title.empty()) return {LayerOutcome::Miss, "no title"};
  Json body;
  LayerResult r = fetch(t, ep.openalex + "/works?search=" + net::url_encode(rec.title) + "&per-page=5", &body, nullptr);
  if (r.outcome != LayerOutcome::Hit) return r;
  return best_title(body.value("results", Json::array()), rec.title, ep.title_threshold);
}

LayerResult try_arxiv(const CitationRecord& rec, net::Transport& t, const ResolverEndpoints& ep) {
  if (rec.arxiv_id.empty()) return {LayerOutcome::Miss, "no arXiv id"};
  std::string xml;
  LayerResult r = fetch(t, ep.arxiv + "/api/query?id_list=" + net::url_encode(rec.arxiv_id), nullptr, &xml);
  if (r.outcome != LayerOutcome::Hit) return r;
  const auto entry = xml.find("<entry>");
  if (entry == std::string::npos) return {LayerOutcome::Miss, "no entry"};
  const auto open = xml.find("<title>", entry);
  const auto close = xml.find("</title>", open == std::string::npos ? entry : open);
  if (open == std::string::npos || close == std::string::npos) return {LayerOutcome::Miss, "entry without title"};
  r.metadata = {{"title", text::trim(xml.substr(open + 7, close - open - 7))}, {"arxiv", rec.arxiv_id}};
  return r;
}

LayerResult try_fallback(const CitationRecord& rec, net::Transport& t, const ResolverEndpoints& ep) {
  if (rec.title.empty()) return {LayerOutcome::Miss, "no title"};
  Json body;
  LayerResult r = fetch(t,
                        ep.semantic_scholar + "/graph/v1/paper/search?query=" + net::url_encode(rec.title) +
                            "&limit=5&fields=title,year,externalIds",
                        &body, nullptr);
  if (r.outcome != LayerOutcome::Hit) return r;
  return best_title(body.value("data", Json::array()), rec.title, ep.title_threshold);
}

}  // namespace

CitationRecord verify_citation(CitationRecord rec, net::Transport& transport, const ResolverEndpoints& endpoints,
                               const RelevanceFn& relevance) {
  using LayerFn = LayerResult (*)(const CitationRecord&, net::Transport&, const ResolverEndpoints&);
  static const LayerFn layers[] = {try_doi, try_title, try_arxiv, try_fallback};
  static const Resolution resolutions[] = {Resolution::Doi, Resolution::TitleFuzzy, Resolution::Arxiv,
                                           Resolution::FallbackApi};
  rec.trace.clear();
  rec.resolution = Resolution::Unresolved;
  bool network_error = false;
  for (std::size_t i = 0; i < kLayerOrder.size(); ++i) {
    LayerResult r = layers[i](rec, transport, endpoints);
    rec.trace.push_back({kLayerOrder[i], r.outcome, r.detail});
    if (r.outcome == LayerOutcome::Error) network_error = true;
    if (r.outcome == LayerOutcome::Hit) {
      rec.resolution = resolutions[i];
      rec.resolved = r.metadata;
      break;
    }
  }

  if (rec.resolution == Resolution::Unresolved) {
    if (network_error) {
      rec.classification = Classification::Suspicious;
      rec.warnings.push_back("resolver unreachable; retry verification before export");
    } else {
      rec.classification = Classification::Hallucinated;
    }
    return rec;
  }
  rec.classification = Classification::Verified;
  if (relevance) {
    try {
      if (!relevance(rec)) {
        rec.classification = Classification::Suspicious;
        rec.warnings.push_back("resolved reference does not match how it is cited");
      }
    } catch (const Error& e) {
      rec.classification = Classification::Suspicious;
      rec.warnings.push_back(std::string("relevance check failed: ") + e.what());
    }
  }
  return rec;
}

std::string strip_citations(const std::string& text, const std::set<std::string>& keys) {
  static const std::regex cite(R"((\\cite[a-z]*)\{([^}]*)\})");
  std::string out;
  auto last = text.cbegin();
  for (auto it = std::sregex_iterator(text.begin(), text.end(), cite); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    out.append(last, m[0].first);
    std::vector<std::string> kept;
    for (const auto& part : text::split_lines(text::replace_all(m[2].str(), ",", "\n"))) {
      const std::string k = text::trim(part);
      if (!k.empty() && !keys.count(k)) kept.push_back(k);
    }
    if (!kept.empty()) {
      out += m[1].str() + "{" + text::join(kept, ",") + "}";
    } else {
      while (!out.empty() && (out.back() == ' ' || out.back() == '~')) out.pop_back();
    }
    last = m[0].second;
  }
  out.append(last, text.cend());
  return out;
}

Json BibliographyReport::summary() const {
  int verified = 0, suspicious = 0, hallucinated = 0;
  for (const auto& r : records) {
    if (r.classification == Classification::Verified) ++verified;
    if (r.classification == Classification::Suspicious) ++suspicious;
    if (r.classification == Classification::Hallucinated) ++hallucinated;
  }
  return {{"total", records.size()}, {"verified", verified}, {"suspicious", suspicious}, {"hallucinated", hallucinated}};
}

Json BibliographyReport::to_json() const {
  Json recs = Json::array();
  for (const auto& r : records) recs.push_back(r.to_json());
  return {{"records", recs}, {"removed", removed}, {"summary", summary()}};
}

BibliographyReport verify_bibliography(const Json& manuscript, net::Transport& transport,
                                       const ResolverEndpoints& endpoints, const RelevanceFn& relevance) {
  BibliographyReport rep;
  rep.manuscript = manuscript;
  Json kept = Json::array();
  std::set<std::string> removed;
  for (const auto& entry : manuscript.value("bibliography", Json::array())) {
    CitationRecord rec = verify_citation(CitationRecord::from_json(entry), transport, endpoints, relevance);
    if (rec.classification == Classification::Hallucinated) {
      removed.insert(rec.key);
      rep.removed.push_back(rec.key);
    } else {
      Json e = rec.to_bib_entry();
      if (rec.classification == Classification::Suspicious) e["warning"] = text::join(rec.warnings, "; ");
      kept.push_back(e);
    }
    rep.records.push_back(std::move(rec));
  }
  rep.manuscript["bibliography"] = kept;
  if (rep.manuscript.contains("sections")) {
    for (auto& s : rep.manuscript["sections"]) s["text"] = strip_citations(s.value("text", ""), removed);
  }
  if (rep.manuscript.contains("citations") && rep.manuscript["citations"].is_array()) {
    Json cits = Json::array();
    for (const auto& c : rep.manuscript["citations"]) {
      if (!(c.is_string() && removed.count(c.get<std::string>()))) cits.push_back(c);
    }
    rep.manuscript["citations"] = cits;
  }
  return rep;
}

namespace {

std::string bib_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '{' || c == '}' || static_cast<unsigned char>(c) < 0x20) continue;
    if (c == '&' || c == '%' || c == '#' || c == '_') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace

std::string to_bibtex(const Json& bibliography) {
  std::string out;
  for (const auto& e : bibliography) {
    const bool preprint = e.contains("arxiv") && !e.contains("venue");
    out += fmt::format("@{}{{{},\n", preprint ? "misc" : "article", e.value("key", "unknown"));
    out += fmt::format("  title = {{{}}},\n", bib_escape(e.value("title", "")));
    std::vector<std::string> authors;
    for (const auto& a : e.value("authors", Json::array())) authors.push_back(bib_escape(a.get<std::string>()));
    if (!authors.empty()) out += fmt::format("  author = {{{}}},\n", text::join(authors, " and "));
    if (e.contains("year")) out += fmt::format("  year = {{{}}},\n", e["year"].dump());
    if (e.contains("venue")) out += fmt::format("  journal = {{{}}},\n", bib_escape(e["venue"].get<std::string>()));
    if (e.contains("doi")) out += fmt::format("  doi = {{{}}},\n", bib_escape(e["doi"].get<std::string>()));
    if (e.contains("arxiv")) out += fmt::format("  eprint = {{{}}},\n", bib_escape(e["arxiv"].get<std::string>()));
    if (e.contains("warning")) out += fmt::format("  note = {{Unverified: {}}},\n", bib_escape(e["warning"].get<std::string>()));
    out += "}\n\n";
  }
  return out;
}

}  // namespace labloop::verify
