#include "stub_server.hpp"

#include <stdexcept>

namespace unprm::testing {

StubServer::StubServer() {
  server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
    serve("/v1/completions", req, res);
  });
  server_.Post("/v1/prm/score", [this](const httplib::Request& req, httplib::Response& res) {
    serve("/v1/prm/score", req, res);
  });
  port_ = server_.bind_to_any_port("127.0.0.1");
  if (port_ <= 0) throw std::runtime_error("stub server could not bind");
  thread_ = std::thread([this] { server_.listen_after_bind(); });
  server_.wait_until_ready();
}

StubServer::~StubServer() {
  server_.stop();
  if (thread_.joinable()) thread_.join();
}

std::string StubServer::base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

void StubServer::on_completions(Handler handler) {
  std::lock_guard<std::mutex> lock(mutex_);
  completions_ = std::move(handler);
}

void StubServer::on_score(Handler handler) {
  std::lock_guard<std::mutex> lock(mutex_);
  score_ = std::move(handler);
}

void StubServer::fail_next(int status, int count) {
  std::lock_guard<std::mutex> lock(mutex_);
  for (int i = 0; i < count; ++i) failures_.push_back(status);
}

std::vector<nlohmann::json> StubServer::requests(const std::string& path) const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::vector<nlohmann::json> out;
  for (const auto& [p, body] : log_) {
    if (p == path) out.push_back(body);
  }
  return out;
}

std::size_t StubServer::request_count() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return log_.size();
}

std::string StubServer::last_authorization() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return last_authorization_;
}

std::uint64_t StubServer::served_completions() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return served_completions_;
}

std::uint64_t StubServer::served_tokens() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return served_tokens_;
}

void StubServer::serve(const std::string& path, const httplib::Request& req, httplib::Response& res) {
  nlohmann::json body = nlohmann::json::parse(req.body, nullptr, false);
  Handler handler;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    log_.emplace_back(path, body);
    last_authorization_ = req.get_header_value("Authorization");
    if (!failures_.empty()) {
      res.status = failures_.front();
      failures_.pop_front();
      res.set_content(R"({"error":"injected"})", "application/json");
      return;
    }
    handler = path == "/v1/completions" ? completions_ : score_;
  }
  if (!handler) {
    res.status = 404;
    return;
  }
  StubReply reply = handler(body);
  if (reply.status == 200 && reply.body.contains("choices")) {
    std::lock_guard<std::mutex> lock(mutex_);
    for (const auto& c : reply.body["choices"]) {
      ++served_completions_;
      if (c.contains("logprobs") && c["logprobs"].is_object()) served_tokens_ += c["logprobs"]["tokens"].size();
    }
  }
  res.status = reply.status;
  res.set_content(reply.body.dump(), "application/json");
}

StubReply fixed_completion(const nlohmann::json& body, const std::vector<std::pair<std::string, double>>& tokens) {
  nlohmann::json choices = nlohmann::json::array();
  const int n = body.value("n", 1);
  for (int i = 0; i < n; ++i) {
    nlohmann::json toks = nlohmann::json::array(), lps = nlohmann::json::array();
    std::string text;
    for (const auto& [t, lp] : tokens) {
      toks.push_back(t);
      lps.push_back(lp);
      text += t;
    }
    choices.push_back({{"index", i}, {"text", text}, {"logprobs", {{"tokens", toks}, {"token_logprobs", lps}}}});
  }
  return {200, {{"choices", choices}}};
}

StubServer::Handler simulated_completions(const SimulatedProvider& sim, std::vector<Question> questions) {
  return [&sim, questions = std::move(questions)](const nlohmann::json& body) -> StubReply {
    const std::string prompt = body.value("prompt", std::string());
    const Question* match = nullptr;
    for (const auto& q : questions) {
      if (prompt.rfind(q.statement + "\n\n", 0) == 0) {
        match = &q;
        break;
      }
    }
    if (match == nullptr) return {400, {{"error", "unknown question"}}};
    std::vector<std::string> prefix;
    std::string rest = prompt.substr(match->statement.size() + 2);
    std::size_t pos = 0;
    while (pos < rest.size()) {
      auto end = rest.find("\n\n", pos);
      if (end == std::string::npos) return {400, {{"error", "unterminated step"}}};
      prefix.push_back(rest.substr(pos, end - pos));
      pos = end + 2;
    }
    std::optional<std::uint64_t> seed;
    if (body.contains("seed")) seed = body["seed"].get<std::uint64_t>();
    auto raw = sim.complete(match->id, prefix, body.value("n", 1), seed);
    nlohmann::json choices = nlohmann::json::array();
    int index = 0;
    for (const auto& c : raw) {
      nlohmann::json toks = nlohmann::json::array(), lps = nlohmann::json::array();
      for (const auto& t : c.tokens) {
        toks.push_back(t.text);
        lps.push_back(t.logprob);
      }
      choices.push_back({{"index", index++}, {"text", c.text}, {"logprobs", {{"tokens", toks}, {"token_logprobs", lps}}}});
    }
    return {200, {{"choices", choices}}};
  };
}

}  // namespace unprm::testing
