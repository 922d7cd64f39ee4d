#include "dprm/toy_lm.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <random>

#include "dprm/error.h"
#include "dprm/random.h"
#include "dprm/text.h"

namespace dprm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::VectorXd log_softmax(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return z.array() - lse;
}

}  // namespace

std::size_t ContextHash::operator()(const Context& c) const noexcept {
  std::size_t h = 0x84222325cbf29ce4ULL;
  for (int v : c) {
    h ^= static_cast<std::size_t>(static_cast<std::uint32_t>(v)) +
         0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return h;
}

ToyLm::ToyLm(std::vector<std::string> vocab, std::size_t order,
             std::size_t max_len)
    : vocab_(std::move(vocab)), order_(order), max_len_(max_len), end_id_(-1) {
  if (order_ == 0) throw Error(ErrorCode::kContract, "order must be >= 1");
  if (max_len_ == 0) throw Error(ErrorCode::kContract, "max_len must be >= 1");
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    const auto& tok = vocab_[i];
    const auto chunks = split_whitespace(tok);
    if (chunks.size() != 1 || chunks.front() != tok) {
      throw Error(ErrorCode::kContract, "invalid vocabulary token '" + tok + "'");
    }
    if (!index_.emplace(tok, static_cast<int>(i)).second) {
      throw Error(ErrorCode::kContract, "duplicate vocabulary token '" + tok + "'");
    }
    longest_token_ = std::max(longest_token_, tok.size());
    if (tok.size() != 1) char_level_ = false;
  }
  auto it = index_.find(std::string(kEnd));
  if (it == index_.end()) {
    throw Error(ErrorCode::kContract, "vocabulary lacks end marker '$'");
  }
  end_id_ = it->second;
}

std::optional<int> ToyLm::token_id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

namespace {

// Greedy longest-match segmentation of one whitespace chunk.
bool segment_chunk(const ToyLm& lm, std::string_view chunk, std::size_t longest,
                   std::vector<int>& out) {
  std::size_t i = 0;
  std::vector<int> ids;
  while (i < chunk.size()) {
    std::size_t len = std::min(longest, chunk.size() - i);
    bool matched = false;
    for (; len > 0; --len) {
      if (auto id = lm.token_id(chunk.substr(i, len))) {
        ids.push_back(*id);
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) return false;
  }
  out.insert(out.end(), ids.begin(), ids.end());
  return true;
}

}  // namespace

std::vector<int> ToyLm::tokenize(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& chunk : split_whitespace(text)) {
    if (!segment_chunk(*this, chunk, longest_token_, ids)) {
      throw Error(ErrorCode::kTokenization,
                  "'" + chunk + "' is not expressible in the toy vocabulary");
    }
  }
  return ids;
}

std::vector<int> ToyLm::tokenize_prompt(std::string_view prompt) const {
  std::vector<int> ids;
  for (const auto& chunk : split_whitespace(prompt)) {
    segment_chunk(*this, chunk, longest_token_, ids);
  }
  return ids;
}

std::string ToyLm::detokenize(const std::vector<int>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0 && !char_level_) out += ' ';
    out += vocab_.at(static_cast<std::size_t>(ids[i]));
  }
  return out;
}

Context ToyLm::initial_context(std::string_view prompt) const {
  Context ctx(order_, kBos);
  for (int id : tokenize_prompt(prompt)) advance(ctx, id);
  return ctx;
}

void ToyLm::advance(Context& context, int token) const {
  context.erase(context.begin());
  context.push_back(token);
}

Eigen::VectorXd ToyLm::logits(const Context& context) const {
  auto it = table_.find(context);
  if (it == table_.end()) {
    return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vocab_.size()));
  }
  return it->second;
}

Eigen::VectorXd ToyLm::log_probs(const Context& context,
                                 std::size_t position) const {
  if (is_forced(position)) {
    Eigen::VectorXd out = Eigen::VectorXd::Constant(
        static_cast<Eigen::Index>(vocab_.size()), kNegInf);
    out[end_id_] = 0.0;
    return out;
  }
  return log_softmax(logits(context));
}

Eigen::VectorXd& ToyLm::row(const Context& context) {
  auto [it, inserted] = table_.try_emplace(
      context, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vocab_.size())));
  return it->second;
}

std::vector<TokenScore> ToyLm::score(std::string_view prompt,
                                     std::string_view completion) const {
  const auto ids = tokenize(completion);
  if (ids.empty()) {
    throw Error(ErrorCode::kTokenization, "completion has no tokens");
  }
  Context ctx = initial_context(prompt);
  std::vector<TokenScore> out;
  out.reserve(ids.size());
  for (std::size_t pos = 0; pos < ids.size(); ++pos) {
    if (pos > 0 && ids[pos - 1] == end_id_) {
      throw Error(ErrorCode::kTokenization, "tokens after end marker");
    }
    if (is_forced(pos) && ids[pos] != end_id_) {
      throw Error(ErrorCode::kContract, "completion exceeds max_len");
    }
    const double lp = log_probs(ctx, pos)[ids[pos]];
    out.push_back({vocab_[static_cast<std::size_t>(ids[pos])], lp});
    advance(ctx, ids[pos]);
  }
  return out;
}

std::vector<std::string> ToyLm::sample(std::string_view prompt,
                                       const SampleOptions& options) const {
  if (options.n == 0) throw Error(ErrorCode::kContract, "n must be >= 1");
  if (!(options.temperature >= 0.0)) {
    throw Error(ErrorCode::kContract, "temperature must be positive");
  }
  const bool greedy = options.temperature < 1e-8;
  std::vector<std::string> out;
  out.reserve(options.n);
  for (std::size_t j = 0; j < options.n; ++j) {
    std::mt19937_64 rng(mix_seed(options.seed, j));
    Context ctx = initial_context(prompt);
    std::vector<int> ids;
    for (std::size_t pos = 0; pos < max_len_; ++pos) {
      int next = end_id_;
      if (!is_forced(pos)) {
        const Eigen::VectorXd z = logits(ctx);
        if (greedy) {
          Eigen::Index arg = 0;
          z.maxCoeff(&arg);  // first maximum on ties
          next = static_cast<int>(arg);
        } else {
          Eigen::VectorXd p =
              log_softmax(z / options.temperature).array().exp();
          double u = unit_uniform(rng);
          next = static_cast<int>(p.size()) - 1;
          double acc = 0.0;
          for (Eigen::Index v = 0; v < p.size(); ++v) {
            acc += p[v];
            if (u < acc) {
              next = static_cast<int>(v);
              break;
            }
          }
        }
      }
      ids.push_back(next);
      if (next == end_id_) break;
      advance(ctx, next);
    }
    out.push_back(truncate_at_stop(detokenize(ids), options.stop));
  }
  return out;
}

nlohmann::json ToyLm::to_json() const {
  // Rows sorted by context for byte-stable output.
  std::map<Context, const Eigen::VectorXd*> sorted;
  for (const auto& [ctx, row] : table_) sorted.emplace(ctx, &row);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [ctx, row] : sorted) {
    nlohmann::json c = nlohmann::json::array();
    for (int id : ctx) {
      if (id == kBos) {
        c.push_back(nullptr);
      } else {
        c.push_back(vocab_[static_cast<std::size_t>(id)]);
      }
    }
    rows.push_back({{"context", c},
                    {"logits", std::vector<double>(row->data(),
                                                   row->data() + row->size())}});
  }
  return {{"vocab", vocab_},
          {"order", order_},
          {"max_len", max_len_},
          {"rows", rows}};
}

ToyLm ToyLm::from_json(const nlohmann::json& j) {
  ToyLm lm(j.at("vocab").get<std::vector<std::string>>(),
           j.at("order").get<std::size_t>(), j.at("max_len").get<std::size_t>());
  for (const auto& r : j.at("rows")) {
    Context ctx;
    for (const auto& c : r.at("context")) {
      if (c.is_null()) {
        ctx.push_back(kBos);
      } else {
        auto id = lm.token_id(c.get<std::string>());
        if (!id) throw Error(ErrorCode::kParse, "unknown context token");
        ctx.push_back(*id);
      }
    }
    if (ctx.size() != lm.order_) {
      throw Error(ErrorCode::kParse, "context length does not match order");
    }
    auto values = r.at("logits").get<std::vector<double>>();
    if (values.size() != lm.vocab_.size()) {
      throw Error(ErrorCode::kParse, "logit row length does not match vocab");
    }
    lm.row(ctx) = Eigen::Map<const Eigen::VectorXd>(
        values.data(), static_cast<Eigen::Index>(values.size()));
  }
  return lm;
}

namespace {

void write_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
    throw Error(ErrorCode::kParse, "truncated binary model");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void ToyLm::write_binary(std::ostream& out) const {
  std::map<Context, const Eigen::VectorXd*> sorted;
  for (const auto& [ctx, row] : table_) sorted.emplace(ctx, &row);
  const nlohmann::json header = {{"vocab", vocab_},
                                 {"order", order_},
                                 {"max_len", max_len_},
                                 {"rows", sorted.size()}};
  out << header.dump() << '\n';
  for (const auto& [ctx, row] : sorted) {
    for (int id : ctx) {
      write_u64(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(id)));
    }
    for (Eigen::Index i = 0; i < row->size(); ++i) {
      std::uint64_t bits;
      const double v = (*row)[i];
      std::memcpy(&bits, &v, sizeof bits);
      write_u64(out, bits);
    }
  }
}

ToyLm ToyLm::read_binary(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParse, "missing model header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("bad model header: ") + e.what());
  }
  ToyLm lm(header.at("vocab").get<std::vector<std::string>>(),
           header.at("order").get<std::size_t>(),
           header.at("max_len").get<std::size_t>());
  const auto rows = header.at("rows").get<std::size_t>();
  const auto v = static_cast<Eigen::Index>(lm.vocab_size());
  for (std::size_t r = 0; r < rows; ++r) {
    Context ctx(lm.order_);
    for (auto& id : ctx) {
      id = static_cast<int>(static_cast<std::int64_t>(read_u64(in)));
      if (id < kBos || id >= static_cast<int>(lm.vocab_size())) {
        throw Error(ErrorCode::kParse, "context id out of range");
      }
    }
    Eigen::VectorXd row(v);
    for (Eigen::Index i = 0; i < v; ++i) {
      const std::uint64_t bits = read_u64(in);
      std::memcpy(&row[i], &bits, sizeof bits);
    }
    lm.table_[ctx] = std::move(row);
  }
  return lm;
}

bool ToyLm::operator==(const ToyLm& other) const {
  if (vocab_ != other.vocab_ || order_ != other.order_ ||
      max_len_ != other.max_len_) {
    return false;
  }
  // Missing rows equal zero rows.
  auto covers = [](const ToyLm& a, const ToyLm& b) {
    for (const auto& [ctx, row] : a.table_) {
      auto it = b.table_.find(ctx);
      if (it == b.table_.end()) {
        if (!row.isZero(0.0)) return false;
      } else if (!(row.array() == it->second.array()).all()) {
        return false;
      }
    }
    return true;
  };
  return covers(*this, other) && covers(other, *this);
}

std::vector<Completion> enumerate_completions(const ToyLm& model,
                                              std::string_view prompt,
                                              std::string_view prefix,
                                              std::size_t max_leaves) {
  const auto prefix_ids = model.tokenize(prefix);
  Context ctx = model.initial_context(prompt);
  for (std::size_t i = 0; i < prefix_ids.size(); ++i) {
    if (prefix_ids[i] == model.end_id()) {
      if (i + 1 != prefix_ids.size()) {
        throw Error(ErrorCode::kTokenization, "tokens after end marker");
      }
      return {{"", 1.0}};
    }
    model.advance(ctx, prefix_ids[i]);
  }
  if (prefix_ids.size() >= model.max_len()) {
    throw Error(ErrorCode::kContract, "prefix exceeds max_len");
  }

  std::vector<Completion> out;
  std::vector<int> path;
  std::size_t leaves = 0;
  // Depth-first over continuations; log-probabilities accumulated exactly as
  // score() would.
  auto dfs = [&](auto&& self, const Context& c, std::size_t pos,
                 double logp) -> void {
    const Eigen::VectorXd lp = model.log_probs(c, pos);
    for (Eigen::Index v = 0; v < lp.size(); ++v) {
      if (lp[v] == kNegInf) continue;
      path.push_back(static_cast<int>(v));
      if (static_cast<int>(v) == model.end_id()) {
        if (++leaves > max_leaves) {
          throw Error(ErrorCode::kEnumerationTooLarge,
                      "more than " + std::to_string(max_leaves) + " completions");
        }
        out.push_back({model.detokenize(path), std::exp(logp + lp[v])});
      } else {
        Context next = c;
        model.advance(next, static_cast<int>(v));
        self(self, next, pos + 1, logp + lp[v]);
      }
      path.pop_back();
    }
  };
  dfs(dfs, ctx, prefix_ids.size(), 0.0);
  return out;
}

}  // namespace dprm
