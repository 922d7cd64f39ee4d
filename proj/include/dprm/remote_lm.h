#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "dprm/lm_interface.h"

namespace dprm {

// Gateway endpoint, e.g. "http://127.0.0.1:8080". An empty `url` falls back to
// the DPRM_GATEWAY_URL environment variable.
struct GatewayOptions {
  std::string url;
  double timeout_seconds = 120.0;
};

std::string resolve_gateway_url(const std::string& url);

// JSON-over-HTTP client. Every call opens its own connection, so one client may
// be shared by any number of threads. Transport failures and non-200 replies
// raise TransportError.
class GatewayClient {
 public:
  explicit GatewayClient(GatewayOptions options);

  nlohmann::json post(const std::string& path, const nlohmann::json& body) const;
  nlohmann::json get(const std::string& path) const;

  // True when GET /healthz answers {"status": "ok"}.
  bool healthy() const;
  const std::string& url() const { return url_; }

 private:
  std::string url_;
  double timeout_seconds_;
};

class RemoteLm final : public LanguageModel {
 public:
  RemoteLm(const GatewayClient& client, std::string model);

  std::vector<TokenScore> score(std::string_view prompt,
                                std::string_view completion) const override;
  std::vector<std::string> sample(std::string_view prompt,
                                  const SampleOptions& options) const override;

  const std::string& model() const { return model_; }

 private:
  const GatewayClient* client_;
  std::string model_;
};

class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(const GatewayClient& client);
  Eigen::MatrixXd embed(std::span<const std::string> texts) const override;

 private:
  const GatewayClient* client_;
};

struct ConformanceReport {
  bool healthy = false;
  bool logprobs_ok = false;
  bool sample_ok = false;
  bool embed_ok = false;
  std::vector<std::string> problems;

  bool ok() const { return healthy && logprobs_ok && sample_ok && embed_ok; }
  nlohmann::json to_json() const;
};

// Health check plus one well-formed request per endpoint, validating the
// replies against the wire schema.
ConformanceReport probe_gateway(const GatewayClient& client, const std::string& model);

}  // namespace dprm
