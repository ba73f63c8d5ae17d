#include <chrono>
#include <exception>
#include <thread>
#include <utility>

#include "crosscog/embed.hpp"
#include "crosscog/errors.hpp"
#include "httplib.h"
#include "json.hpp"

namespace crosscog {
namespace {

using nlohmann::json;

// endpoint "http://host:port/some/path" -> {"http://host:port", "/some/path"}
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0)
    throw Error(ErrorCode::ConfigError,
                "remote endpoint must be http(s): " + endpoint);
  const auto scheme = endpoint.find("://");
  const auto slash = endpoint.find('/', scheme + 3);
  if (slash == std::string::npos) return {endpoint, "/"};
  return {endpoint.substr(0, slash), endpoint.substr(slash)};
}

class RemoteEmbedder final : public TextEmbedder {
 public:
  explicit RemoteEmbedder(RemoteTemConfig config) : config_(std::move(config)) {
    if (config_.dim <= 0)
      throw Error(ErrorCode::ConfigError, "remote tem requires a declared dim");
    if (config_.endpoint.empty())
      throw Error(ErrorCode::ConfigError, "remote tem requires an endpoint");
    if (config_.batch_size < 1 || config_.max_inflight < 1 || config_.max_retries < 0)
      throw Error(ErrorCode::ConfigError, "remote tem batch/inflight/retries out of range");
    std::tie(host_, path_) = split_endpoint(config_.endpoint);
    id_ = "remote-" + config_.model;
  }

  const std::string& id() const override { return id_; }
  int dim() const override { return config_.dim; }

 protected:
  std::vector<LanguageVector> embed_impl(
      std::span<const std::string> texts) override {
    std::vector<LanguageVector> out(texts.size());
    const std::size_t chunk = static_cast<std::size_t>(config_.batch_size);
    const std::size_t n_chunks = (texts.size() + chunk - 1) / chunk;

    // Waves of at most max_inflight concurrent requests; each chunk writes
    // into its own slot so output order follows input order.
    for (std::size_t wave = 0; wave < n_chunks;
         wave += static_cast<std::size_t>(config_.max_inflight)) {
      const std::size_t end =
          std::min(n_chunks, wave + static_cast<std::size_t>(config_.max_inflight));
      std::vector<std::thread> workers;
      std::vector<std::exception_ptr> failures(end - wave);
      for (std::size_t c = wave; c < end; ++c) {
        workers.emplace_back([&, c] {
          try {
            const std::size_t lo = c * chunk;
            const std::size_t hi = std::min(texts.size(), lo + chunk);
            auto vectors = fetch_chunk(texts.subspan(lo, hi - lo));
            for (std::size_t i = lo; i < hi; ++i) out[i] = std::move(vectors[i - lo]);
          } catch (...) {
            failures[c - wave] = std::current_exception();
          }
        });
      }
      for (auto& w : workers) w.join();
      for (auto& f : failures)
        if (f) std::rethrow_exception(f);
    }
    return out;
  }

 private:
  std::vector<LanguageVector> fetch_chunk(std::span<const std::string> texts) {
    json request = {{"model", config_.model}, {"input", json::array()}};
    for (const auto& t : texts) request["input"].push_back(t);
    const std::string body = request.dump();

    std::string last_failure = "no attempt made";
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0)
        std::this_thread::sleep_for(std::chrono::milliseconds(100) * (1 << (attempt - 1)));
      httplib::Client client(host_);
      client.set_connection_timeout(10);
      client.set_read_timeout(60);
      httplib::Headers headers;
      if (!config_.auth_token.empty())
        headers.emplace("Authorization", "Bearer " + config_.auth_token);
      auto res = client.Post(path_, headers, body, "application/json");
      if (!res) {
        last_failure = "transport error " + httplib::to_string(res.error());
        continue;
      }
      if (res->status != 200) {
        last_failure = "HTTP " + std::to_string(res->status);
        continue;
      }
      try {
        return parse_response(res->body, texts.size());
      } catch (const std::exception& e) {
        last_failure = e.what();
      }
    }
    throw Error(ErrorCode::BackendUnavailable,
                "remote tem '" + config_.model + "' failed after " +
                    std::to_string(config_.max_retries + 1) + " attempts (" +
                    last_failure + ")");
  }

  std::vector<LanguageVector> parse_response(const std::string& body,
                                             std::size_t expected) const {
    const json parsed = json::parse(body);
    const auto& data = parsed.at("data");
    if (!data.is_array() || data.size() != expected)
      throw std::runtime_error("response 'data' size mismatch");
    std::vector<LanguageVector> out;
    out.reserve(expected);
    for (const auto& item : data) {
      const auto& values = item.at("embedding");
      if (!values.is_array() || static_cast<int>(values.size()) != config_.dim)
        throw std::runtime_error("embedding length differs from declared dim");
      LanguageVector v(config_.dim);
      for (int i = 0; i < config_.dim; ++i) v[i] = values[i].get<float>();
      out.push_back(std::move(v));
    }
    return out;
  }

  RemoteTemConfig config_;
  std::string host_;
  std::string path_;
  std::string id_;
};

}  // namespace

std::unique_ptr<TextEmbedder> make_remote_embedder(RemoteTemConfig config) {
  return std::make_unique<RemoteEmbedder>(std::move(config));
}

}  // namespace crosscog
