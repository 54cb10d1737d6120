#pragma once

#include <array>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>

#include <openssl/evp.h>

#include <httplib.h>
#include <json.hpp>

#include "xtm/error.hpp"

namespace xtm {

/// Lowercase hex SHA-256 of `data`.
inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error(Errc::ProviderError, "sha256 failed");
  std::string out;
  out.reserve(2 * len);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    out += buf;
  }
  return out;
}

inline std::optional<std::string> env_var(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

struct Endpoint {
  std::string scheme_host_port;  // e.g. "http://localhost:8080"
  std::string path;              // e.g. "/v1/complete"
};

inline Endpoint split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(Errc::ProviderError, "bad endpoint url " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

struct HttpOptions {
  std::optional<std::string> bearer;
  double timeout_seconds = 60.0;
};

enum class HttpFailure { None, Auth, Transient, Client };

struct HttpResult {
  HttpFailure failure = HttpFailure::None;
  int status = 0;
  nlohmann::json body;
  std::string message;
};

/// POSTs a JSON body and decodes a JSON reply. Never throws for transport or
/// status failures; those are classified in `failure` so callers choose the
/// retry policy.
inline HttpResult post_json(const std::string& url, const nlohmann::json& payload,
                            const HttpOptions& opts) {
  const auto ep = split_url(url);
  httplib::Client client(ep.scheme_host_port);
  const auto secs = static_cast<time_t>(opts.timeout_seconds);
  const auto usecs = static_cast<time_t>((opts.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  httplib::Headers headers;
  if (opts.bearer) headers.emplace("Authorization", "Bearer " + *opts.bearer);

  HttpResult r;
  auto res = client.Post(ep.path, headers, payload.dump(), "application/json");
  if (!res) {
    r.failure = HttpFailure::Transient;
    r.message = "transport: " + httplib::to_string(res.error());
    return r;
  }
  r.status = res->status;
  if (res->status == 401 || res->status == 403) {
    r.failure = HttpFailure::Auth;
    r.message = "auth";
    return r;
  }
  if (res->status >= 500 || res->status == 429) {
    r.failure = HttpFailure::Transient;
    r.message = "status " + std::to_string(res->status);
    return r;
  }
  if (res->status >= 400) {
    r.failure = HttpFailure::Client;
    r.message = "status " + std::to_string(res->status);
    return r;
  }
  try {
    r.body = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error&) {
    r.failure = HttpFailure::Client;
    r.message = "reply is not JSON";
  }
  return r;
}

}  // namespace xtm
