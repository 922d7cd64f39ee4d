#include <doctest.h>

#include <random>
#include <thread>

#include "dprm/error.h"
#include "dprm/remote_lm.h"
#include "dprm/retrieval.h"
#include "dprm/toy_lm.h"

// After Eigen: <resolv.h> defines a _res macro that collides with Eigen.
#include <httplib.h>

namespace {

std::vector<std::string> char_vocab() {
  std::vector<std::string> v;
  for (char c = 'a'; c <= 'z'; ++c) v.emplace_back(1, c);
  for (char c = 'A'; c <= 'Z'; ++c) v.emplace_back(1, c);
  for (const char* s : {".", "?", ",", ":", "$"}) v.emplace_back(s);
  return v;
}

// In-process gateway serving a ToyLm and a hashing embedder.
class MockGateway {
 public:
  explicit MockGateway(bool broken = false) : lm_(char_vocab(), 1, 32), embedder_(64) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n;
    for (int a = -1; a < static_cast<int>(lm_.vocab_size()); a += 3) {
      auto& row = lm_.row({a});
      for (Eigen::Index i = 0; i < row.size(); ++i) row[i] = n(rng);
    }
    auto json_reply = [](httplib::Response& res, const nlohmann::json& j) {
      res.set_content(j.dump(), "application/json");
    };
    server_.Get("/healthz", [=](const httplib::Request&, httplib::Response& res) {
      json_reply(res, {{"status", "ok"}});
    });
    server_.Post("/logprobs", [=, this](const httplib::Request& req, httplib::Response& res) {
      if (broken) {
        res.status = 503;
        res.set_content(R"({"code": "overloaded", "message": "busy"})", "application/json");
        return;
      }
      const auto j = nlohmann::json::parse(req.body);
      const auto completion = j.at("completion").get<std::string>();
      nlohmann::json tokens = nlohmann::json::array(), lps = nlohmann::json::array();
      if (completion.find_first_not_of(' ') == std::string::npos) {
        json_reply(res, {{"tokens", tokens}, {"logprobs", lps}});
        return;
      }
      for (const auto& s : lm_.score(j.at("prompt").get<std::string>(), completion)) {
        tokens.push_back(s.token);
        lps.push_back(s.logprob);
      }
      json_reply(res, {{"tokens", tokens}, {"logprobs", lps}});
    });
    server_.Post("/sample", [=, this](const httplib::Request& req, httplib::Response& res) {
      const auto j = nlohmann::json::parse(req.body);
      dprm::SampleOptions o;
      o.n = j.at("n").get<std::size_t>();
      o.temperature = j.at("temperature").get<double>();
      o.seed = j.at("seed").get<std::uint64_t>();
      o.max_tokens = j.at("max_tokens").get<std::size_t>();
      json_reply(res, {{"completions", lm_.sample(j.at("prompt").get<std::string>(), o)}});
    });
    server_.Post("/embed", [=, this](const httplib::Request& req, httplib::Response& res) {
      const auto texts = nlohmann::json::parse(req.body).at("texts").get<std::vector<std::string>>();
      const Eigen::MatrixXd m = embedder_.embed(texts);
      std::vector<std::vector<double>> rows;
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        rows.emplace_back();
        for (Eigen::Index c = 0; c < m.cols(); ++c) rows.back().push_back(m(r, c));
      }
      json_reply(res, {{"vectors", rows}});
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockGateway() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  const dprm::ToyLm& lm() const { return lm_; }
  const dprm::HashingEmbedder& embedder() const { return embedder_; }

 private:
  dprm::ToyLm lm_;
  dprm::HashingEmbedder embedder_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_CASE("remote scores align with the served model") {
  const MockGateway gw;
  const dprm::GatewayClient client({gw.url(), 10.0});
  CHECK(client.healthy());
  const dprm::RemoteLm remote(client, "toy");
  for (const auto& [prompt, completion] :
       std::vector<std::pair<std::string, std::string>>{
           {"Question: where?", " The answer is Paris."}, {"abc", "zz y"}}) {
    const auto want = gw.lm().score(prompt, completion);
    const auto got = remote.score(prompt, completion);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].token == want[i].token);
      CHECK(std::abs(got[i].logprob - want[i].logprob) < 1e-4);
    }
  }
  CHECK(remote.score("x", "").empty());
}

TEST_CASE("remote sampling and embedding are deterministic") {
  const MockGateway gw;
  const dprm::GatewayClient client({gw.url(), 10.0});
  const dprm::RemoteLm remote(client, "toy");
  dprm::SampleOptions o;
  o.n = 3;
  o.seed = 5;
  const auto a = remote.sample("Say hi.", o);
  CHECK(a.size() == 3);
  CHECK(a == remote.sample("Say hi.", o));
  const dprm::RemoteEmbedder embedder(client);
  const std::vector<std::string> texts{"alpha beta", "gamma"};
  const Eigen::MatrixXd v = embedder.embed(texts);
  CHECK((v - embedder.embed(texts)).norm() == 0.0);
  CHECK((v - gw.embedder().embed(texts)).norm() < 1e-9);
  CHECK_THROWS_AS(embedder.embed({}), dprm::Error);
}

TEST_CASE("probe_gateway accepts a conforming gateway") {
  const MockGateway gw;
  const dprm::GatewayClient client({gw.url(), 10.0});
  const auto report = dprm::probe_gateway(client, "toy");
  CHECK(report.ok());
  CHECK(report.problems.empty());
  CHECK(report.to_json()["ok"] == true);
}

TEST_CASE("non-200 replies and unreachable gateways raise transport errors") {
  const MockGateway gw(true);
  const dprm::GatewayClient client({gw.url(), 10.0});
  const dprm::RemoteLm remote(client, "toy");
  try {
    remote.score("a", "b");
    FAIL("expected a transport error");
  } catch (const dprm::TransportError& e) {
    CHECK(e.status() == 503);
    CHECK(std::string(e.what()).find("overloaded") != std::string::npos);
  }
  CHECK_FALSE(dprm::probe_gateway(client, "toy").ok());

  const dprm::GatewayClient dead({"http://127.0.0.1:1", 1.0});
  CHECK_FALSE(dead.healthy());
  try {
    dprm::RemoteLm(dead, "toy").score("a", "b");
    FAIL("expected a transport error");
  } catch (const dprm::TransportError& e) {
    CHECK(e.status() == 0);
    CHECK(e.code() == dprm::ErrorCode::kTransport);
  }
}

TEST_CASE("gateway URL resolution") {
  CHECK(dprm::resolve_gateway_url("http://h:1") == "http://h:1");
  CHECK(dprm::GatewayClient({"http://h:1///", 1.0}).url() == "http://h:1");
}
