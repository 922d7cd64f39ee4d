#include "dprm/remote_lm.h"

#include <cmath>
#include <cstdlib>

#include <httplib.h>

#include "dprm/error.h"
#include "dprm/retrieval.h"

namespace dprm {

namespace {

std::string error_message(const httplib::Result& res) {
  try {
    const auto j = nlohmann::json::parse(res->body);
    return j.value("code", std::string("error")) + ": " + j.value("message", res->body);
  } catch (const nlohmann::json::exception&) {
    return res->body;
  }
}

nlohmann::json decode(const httplib::Result& res, const std::string& path) {
  if (!res) {
    throw TransportError(0, path + ": " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw TransportError(res->status, path + ": " + error_message(res));
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(res->status, path + ": malformed JSON reply: " + e.what());
  }
}

void configure(httplib::Client& cli, double timeout) {
  const auto sec = static_cast<time_t>(timeout);
  const auto usec = static_cast<time_t>((timeout - static_cast<double>(sec)) * 1e6);
  cli.set_connection_timeout(sec, usec);
  cli.set_read_timeout(sec, usec);
  cli.set_write_timeout(sec, usec);
}

}  // namespace

std::string resolve_gateway_url(const std::string& url) {
  if (!url.empty()) return url;
  if (const char* env = std::getenv("DPRM_GATEWAY_URL"); env && *env) return env;
  throw Error(ErrorCode::kContract,
              "no gateway URL: pass --gateway-url or set DPRM_GATEWAY_URL");
}

GatewayClient::GatewayClient(GatewayOptions options)
    : url_(resolve_gateway_url(options.url)), timeout_seconds_(options.timeout_seconds) {
  while (!url_.empty() && url_.back() == '/') url_.pop_back();
}

nlohmann::json GatewayClient::post(const std::string& path,
                                   const nlohmann::json& body) const {
  httplib::Client cli(url_);
  configure(cli, timeout_seconds_);
  return decode(cli.Post(path, body.dump(), "application/json"), path);
}

nlohmann::json GatewayClient::get(const std::string& path) const {
  httplib::Client cli(url_);
  configure(cli, timeout_seconds_);
  return decode(cli.Get(path), path);
}

bool GatewayClient::healthy() const {
  try {
    const auto j = get("/healthz");
    return j.is_object() && j.value("status", std::string()) == "ok";
  } catch (const Error&) {
    return false;
  }
}

RemoteLm::RemoteLm(const GatewayClient& client, std::string model)
    : client_(&client), model_(std::move(model)) {}

std::vector<TokenScore> RemoteLm::score(std::string_view prompt,
                                        std::string_view completion) const {
  const nlohmann::json req = {{"model", model_},
                              {"prompt", std::string(prompt)},
                              {"completion", std::string(completion)}};
  const auto res = client_->post("/logprobs", req);
  try {
    const auto& tokens = res.at("tokens");
    const auto& logprobs = res.at("logprobs");
    if (!tokens.is_array() || !logprobs.is_array() || tokens.size() != logprobs.size()) {
      throw TransportError(200, "/logprobs: tokens and logprobs differ in length");
    }
    std::vector<TokenScore> out;
    out.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const double lp = logprobs[i].get<double>();
      if (!std::isfinite(lp)) throw Error(ErrorCode::kNumeric, "non-finite logprob");
      out.push_back({tokens[i].get<std::string>(), lp});
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(200, std::string("/logprobs: bad reply: ") + e.what());
  }
}

std::vector<std::string> RemoteLm::sample(std::string_view prompt,
                                          const SampleOptions& options) const {
  nlohmann::json req = {{"model", model_},
                        {"prompt", std::string(prompt)},
                        {"n", options.n},
                        {"max_tokens", options.max_tokens},
                        {"temperature", options.temperature},
                        {"stop", options.stop},
                        {"seed", options.seed}};
  const auto res = client_->post("/sample", req);
  try {
    auto completions = res.at("completions").get<std::vector<std::string>>();
    if (completions.size() != options.n) {
      throw TransportError(200, "/sample: asked for " + std::to_string(options.n) +
                                    " completions, got " +
                                    std::to_string(completions.size()));
    }
    for (auto& c : completions) c = truncate_at_stop(c, options.stop);
    return completions;
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(200, std::string("/sample: bad reply: ") + e.what());
  }
}

RemoteEmbedder::RemoteEmbedder(const GatewayClient& client) : client_(&client) {}

Eigen::MatrixXd RemoteEmbedder::embed(std::span<const std::string> texts) const {
  if (texts.empty()) throw Error(ErrorCode::kContract, "nothing to embed");
  const nlohmann::json req = {
      {"texts", std::vector<std::string>(texts.begin(), texts.end())}};
  const auto res = client_->post("/embed", req);
  try {
    const auto rows = res.at("vectors").get<std::vector<std::vector<double>>>();
    if (rows.size() != texts.size() || rows.front().empty()) {
      throw TransportError(200, "/embed: wrong number of vectors");
    }
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.front().size()) {
        throw TransportError(200, "/embed: ragged vectors");
      }
      for (std::size_t c = 0; c < rows[r].size(); ++c) {
        out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
    }
    normalize_rows(out);
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(200, std::string("/embed: bad reply: ") + e.what());
  }
}

nlohmann::json ConformanceReport::to_json() const {
  return {{"healthy", healthy},   {"logprobs_ok", logprobs_ok},
          {"sample_ok", sample_ok}, {"embed_ok", embed_ok},
          {"problems", problems},   {"ok", ok()}};
}

ConformanceReport probe_gateway(const GatewayClient& client, const std::string& model) {
  ConformanceReport report;
  report.healthy = client.healthy();
  if (!report.healthy) report.problems.push_back("GET /healthz did not return status ok");

  const RemoteLm lm(client, model);
  try {
    const auto scores = lm.score("Question: where is the capital?", " The answer is Paris.");
    bool ok = !scores.empty();
    for (const auto& s : scores) ok = ok && s.logprob <= 1e-9;
    const auto empty = lm.score("Question:", "");
    ok = ok && empty.empty();
    report.logprobs_ok = ok;
    if (!ok) report.problems.push_back("/logprobs reply violates the schema");
  } catch (const Error& e) {
    report.problems.push_back(std::string("/logprobs: ") + e.what());
  }
  try {
    SampleOptions options;
    options.n = 2;
    options.max_tokens = 8;
    options.temperature = 0.0;
    const auto a = lm.sample("Say hello.", options);
    const auto b = lm.sample("Say hello.", options);
    report.sample_ok = a.size() == 2 && a == b;
    if (!report.sample_ok) report.problems.push_back("/sample is not deterministic at T=0");
  } catch (const Error& e) {
    report.problems.push_back(std::string("/sample: ") + e.what());
  }
  try {
    const RemoteEmbedder embedder(client);
    const std::vector<std::string> texts{"alpha beta", "alpha beta", "gamma"};
    const Eigen::MatrixXd v = embedder.embed(texts);
    const bool same = (v.row(0) - v.row(1)).norm() == 0.0;
    const bool unit = std::abs(v.row(0).dot(v.row(0)) - 1.0) < 1e-6;
    report.embed_ok = same && unit;
    if (!report.embed_ok) report.problems.push_back("/embed vectors are not deterministic");
  } catch (const Error& e) {
    report.problems.push_back(std::string("/embed: ") + e.what());
  }
  return report;
}

}  // namespace dprm
