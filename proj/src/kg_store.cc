#include "dprm/kg_store.h"

#include <algorithm>
#include <fstream>
#include <istream>
#include <sstream>

#include <json.hpp>

#include "dprm/error.h"
#include "dprm/text.h"

namespace dprm {

namespace {

std::string edge_key(const std::string& h, const std::string& r,
                     const std::string& t) {
  std::string key;
  key.reserve(h.size() + r.size() + t.size() + 2);
  key += h;
  key += '\x1f';
  key += r;
  key += '\x1f';
  key += t;
  return key;
}

std::span<const std::size_t> lookup(
    const std::unordered_map<std::string, std::vector<std::size_t>>& index,
    const std::string& entity) {
  auto it = index.find(entity);
  if (it == index.end()) return {};
  return it->second;
}

}  // namespace

Triple Triple::stored() const {
  if (!inverted) return *this;
  return Triple{tail, relation, head, false};
}

Graph Graph::from_triples(std::vector<Triple> triples) {
  Graph g;
  for (auto& t : triples) {
    if (t.head.empty() || t.relation.empty() || t.tail.empty()) {
      throw Error(ErrorCode::kContract, "triple with empty field");
    }
    Triple s = t.stored();
    auto key = edge_key(s.head, s.relation, s.tail);
    if (!g.edge_keys_.insert(key).second) continue;
    const std::size_t idx = g.triples_.size();
    g.by_head_[s.head].push_back(idx);
    g.by_tail_[s.tail].push_back(idx);
    for (const auto* e : {&s.head, &s.tail}) {
      if (g.entity_set_.insert(*e).second) g.entities_.push_back(*e);
    }
    if (g.relation_set_.insert(s.relation).second) {
      g.relations_.push_back(s.relation);
    }
    g.triples_.push_back(std::move(s));
  }
  return g;
}

std::span<const std::size_t> Graph::by_head(const std::string& entity) const {
  return lookup(by_head_, entity);
}

std::span<const std::size_t> Graph::by_tail(const std::string& entity) const {
  return lookup(by_tail_, entity);
}

bool Graph::has_entity(const std::string& entity) const {
  return entity_set_.count(entity) > 0;
}

bool Graph::has_relation(const std::string& relation) const {
  return relation_set_.count(relation) > 0;
}

bool Graph::contains(const Triple& triple) const {
  Triple s = triple.stored();
  return edge_keys_.count(edge_key(s.head, s.relation, s.tail)) > 0;
}

Graph load_triples(std::istream& in, TripleFormat format) {
  std::vector<Triple> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (format == TripleFormat::kTsv) {
      std::vector<std::string> cols;
      std::size_t start = 0;
      while (true) {
        auto tab = line.find('\t', start);
        cols.push_back(line.substr(start, tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
      }
      if (cols.size() != 3) {
        throw ParseError(lineno, "expected 3 tab-separated columns, got " +
                                     std::to_string(cols.size()));
      }
      if (cols[0].empty() || cols[1].empty() || cols[2].empty()) {
        throw ParseError(lineno, "empty field");
      }
      rows.push_back({cols[0], cols[1], cols[2], false});
    } else {
      nlohmann::json obj;
      try {
        obj = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(lineno, e.what());
      }
      if (!obj.is_object() || !obj.contains("head") ||
          !obj.contains("relation") || !obj.contains("tail") ||
          !obj["head"].is_string() || !obj["relation"].is_string() ||
          !obj["tail"].is_string()) {
        throw ParseError(lineno, "expected string keys head, relation, tail");
      }
      Triple t{obj["head"].get<std::string>(),
               obj["relation"].get<std::string>(),
               obj["tail"].get<std::string>(), false};
      if (t.head.empty() || t.relation.empty() || t.tail.empty()) {
        throw ParseError(lineno, "empty field");
      }
      rows.push_back(std::move(t));
    }
  }
  if (rows.empty()) throw Error(ErrorCode::kEmptyGraph, "no triples in input");
  return Graph::from_triples(std::move(rows));
}

Graph load_triples_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kParse, "cannot open " + path);
  auto format = path.ends_with(".jsonl") || path.ends_with(".json")
                    ? TripleFormat::kJsonl
                    : TripleFormat::kTsv;
  return load_triples(in, format);
}

std::vector<Triple> neighbors(const Graph& graph, const std::string& entity,
                              Direction direction) {
  std::vector<std::size_t> idx;
  if (direction != Direction::kIn) {
    auto h = graph.by_head(entity);
    idx.insert(idx.end(), h.begin(), h.end());
  }
  if (direction != Direction::kOut) {
    auto t = graph.by_tail(entity);
    idx.insert(idx.end(), t.begin(), t.end());
  }
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  std::vector<Triple> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(graph.triples()[i]);
  return out;
}

Triple reconstruct_triple(const Triple& triple,
                          std::span<const std::string> sources) {
  if (sources.empty()) {
    throw Error(ErrorCode::kContract, "empty source entity set");
  }
  auto has = [&](const std::string& e) {
    return std::find(sources.begin(), sources.end(), e) != sources.end();
  };
  if (has(triple.head)) return triple;
  if (has(triple.tail)) {
    return Triple{triple.tail, triple.relation, triple.head, !triple.inverted};
  }
  throw Error(ErrorCode::kNotReconstructible,
              "neither endpoint of (" + render_triple(triple) +
                  ") is a source entity");
}

PathReport validate_path(const Graph& graph, const KgPath& path) {
  if (path.steps.empty()) throw Error(ErrorCode::kContract, "empty path");
  PathReport report;
  for (std::size_t i = 0; i < path.steps.size(); ++i) {
    if (i > 0 && path.steps[i].head != path.steps[i - 1].tail) {
      report.connected = false;
      if (!report.first_break) report.first_break = i;
    }
    if (!graph.contains(path.steps[i])) {
      report.grounded = false;
      if (!report.first_ungrounded) report.first_ungrounded = i;
    }
  }
  return report;
}

std::string render_triple(const Triple& triple) {
  return triple.head + " " + (triple.inverted ? "~" : "") + triple.relation +
         " " + triple.tail;
}

std::optional<Triple> parse_triple(const std::string& text) {
  std::string body = trim(text);
  if (body.size() >= 2 && body.front() == '(' && body.back() == ')') {
    body = body.substr(1, body.size() - 2);
  }
  std::vector<std::string> parts;
  char sep = body.find('|') != std::string::npos   ? '|'
             : body.find(',') != std::string::npos ? ','
                                                   : '\0';
  if (sep != '\0') {
    std::stringstream ss(body);
    std::string part;
    while (std::getline(ss, part, sep)) parts.push_back(trim(part));
  } else {
    parts = split_whitespace(body);
  }
  if (parts.size() != 3) return std::nullopt;
  for (const auto& p : parts) {
    if (p.empty()) return std::nullopt;
  }
  Triple t{parts[0], parts[1], parts[2], false};
  if (t.relation.size() > 1 && t.relation.front() == '~') {
    t.relation.erase(0, 1);
    t.inverted = true;
  }
  return t;
}

std::vector<std::string> kg_path_steps(const KgPath& path) {
  std::vector<std::string> out;
  out.reserve(path.steps.size());
  for (const auto& t : path.steps) out.push_back(render_triple(t) + " ;");
  return out;
}

std::string serialize_kg_path(const KgPath& path) {
  return join(kg_path_steps(path), " ");
}

KgPath parse_kg_path(const std::string& text) {
  KgPath path;
  std::vector<std::string> current;
  for (auto& tok : split_whitespace(text)) {
    if (tok != ";") {
      current.push_back(std::move(tok));
      continue;
    }
    auto t = parse_triple(join(current, " "));
    if (current.size() != 3 || !t) {
      throw ExtractionError(path.steps.size(), "expected 'head relation tail ;'");
    }
    path.steps.push_back(std::move(*t));
    current.clear();
  }
  if (!current.empty()) {
    throw ExtractionError(path.steps.size(), "unterminated step");
  }
  if (path.steps.empty()) throw Error(ErrorCode::kContract, "empty path text");
  return path;
}

}  // namespace dprm
