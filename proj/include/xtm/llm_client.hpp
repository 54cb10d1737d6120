#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>

#include "xtm/error.hpp"
#include "xtm/net.hpp"

namespace xtm {

/// A text-completion backend. `round` is the 1-based self-consistency round
/// (or repetition index); remote backends ignore it. Implementations must be
/// safe to call concurrently.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const std::string& prompt, int round) const = 0;
};

/// Canned replies from `<dir>/<sha256(prompt)>.r<round>.txt`. When no file
/// matches the prompt hash, `<dir>/default.r<round>.txt` is used if present.
class FixtureLlm final : public LlmClient {
 public:
  explicit FixtureLlm(std::string dir) : dir_(std::move(dir)) {
    if (!std::filesystem::is_directory(dir_)) throw Error(Errc::ProviderError, "fixture directory missing: " + dir_);
  }

  static std::string file_name(const std::string& prompt, int round) {
    return sha256_hex(prompt) + ".r" + std::to_string(round) + ".txt";
  }

  std::string complete(const std::string& prompt, int round) const override {
    namespace fs = std::filesystem;
    fs::path p = fs::path(dir_) / file_name(prompt, round);
    if (!fs::exists(p)) p = fs::path(dir_) / ("default.r" + std::to_string(round) + ".txt");
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(Errc::ProviderError, "no fixture reply for round " + std::to_string(round) + " in " + dir_);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

 private:
  std::string dir_;
};

/// HTTP POST `{"prompt": str}` -> `{"text": str}` with an optional bearer key.
class RemoteLlm final : public LlmClient {
 public:
  RemoteLlm(std::string endpoint, std::optional<std::string> api_key, int max_retries = 2, double timeout_s = 120.0)
      : endpoint_(std::move(endpoint)), key_(std::move(api_key)), max_retries_(max_retries), timeout_s_(timeout_s) {
    if (endpoint_.empty()) throw Error(Errc::ProviderError, "remote LLM requires an endpoint");
  }

  std::string complete(const std::string& prompt, int /*round*/) const override {
    HttpOptions opts{key_, timeout_s_};
    std::string last;
    for (int attempt = 0; attempt <= max_retries_; ++attempt) {
      auto r = post_json(endpoint_, {{"prompt", prompt}}, opts);
      switch (r.failure) {
        case HttpFailure::None:
          if (!r.body.is_object() || !r.body.contains("text") || !r.body["text"].is_string())
            throw Error(Errc::ProviderError, "reply has no text field");
          return r.body["text"].get<std::string>();
        case HttpFailure::Auth:
          throw Error(Errc::ProviderError, "auth");
        case HttpFailure::Client:
          throw Error(Errc::ProviderError, r.message);
        case HttpFailure::Transient:
          last = r.message;
          break;
      }
    }
    throw Error(Errc::ProviderError, "LLM unreachable: " + last);
  }

 private:
  std::string endpoint_;
  std::optional<std::string> key_;
  int max_retries_;
  double timeout_s_;
};

/// Wraps a callable; used for oracle providers in tests and demos.
class FunctionLlm final : public LlmClient {
 public:
  using Fn = std::function<std::string(const std::string& prompt, int round)>;
  explicit FunctionLlm(Fn fn) : fn_(std::move(fn)) {}
  std::string complete(const std::string& prompt, int round) const override { return fn_(prompt, round); }

 private:
  Fn fn_;
};

}  // namespace xtm
