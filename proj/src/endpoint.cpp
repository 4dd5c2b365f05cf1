#include "analyze_rt/endpoint.hpp"

#include <algorithm>
#include <thread>

#include <httplib.h>

#include "analyze_rt/error.hpp"
#include "analyze_rt/jsonl.hpp"

namespace analyze_rt {

void EndpointSpec::ensure_action_stops() {
  for (const char* tag : {"</Code>", "</Answer>"}) {
    if (std::find(stop_sequences.begin(), stop_sequences.end(), tag) == stop_sequences.end()) {
      stop_sequences.emplace_back(tag);
    }
  }
}

ChatRequest ModelEndpoint::make_request(std::vector<ChatMessage> messages) const {
  ChatRequest req;
  req.messages = std::move(messages);
  req.stop = spec.stop_sequences;
  req.sampling = spec.sampling;
  return req;
}

namespace {

struct SplitUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw EndpointError("base_url lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.scheme_host_port = url.substr(0, path_start);
  out.path_prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  return out;
}

}  // namespace

HttpChatClient::HttpChatClient(EndpointSpec spec, std::chrono::seconds timeout)
    : spec_(std::move(spec)), timeout_(timeout) {}

std::string HttpChatClient::complete(const ChatRequest& request) {
  const auto url = split_url(spec_.base_url);
  httplib::Client cli(url.scheme_host_port);
  cli.set_read_timeout(timeout_);
  cli.set_write_timeout(timeout_);
  cli.set_connection_timeout(std::chrono::seconds(30));

  Json messages = Json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  Json body = {{"model", spec_.model_name},
               {"messages", std::move(messages)},
               {"temperature", request.sampling.temperature},
               {"top_p", request.sampling.top_p},
               {"max_tokens", request.sampling.max_tokens_per_call}};
  if (!request.stop.empty()) body["stop"] = request.stop;

  httplib::Headers headers;
  if (!spec_.api_key.empty()) headers.emplace("Authorization", "Bearer " + spec_.api_key);

  auto res = cli.Post(url.path_prefix + "/chat/completions", headers,
                      body.dump(-1, ' ', false, Json::error_handler_t::replace), "application/json");
  if (!res) throw EndpointError("request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw EndpointError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 512));
  }
  auto reply = Json::parse(res->body, nullptr, false);
  if (reply.is_discarded()) throw EndpointError("response is not JSON");
  try {
    const auto& content = reply.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string() : content.get<std::string>();
  } catch (const Json::exception& e) {
    throw EndpointError(std::string("unexpected response shape: ") + e.what());
  }
}

std::string apply_server_stop(std::string_view text, const std::vector<std::string>& stop) {
  std::size_t cut = text.size();
  for (const auto& s : stop) {
    if (s.empty()) continue;
    cut = std::min(cut, text.find(s));
  }
  return std::string(text.substr(0, cut));
}

ScriptedChatClient::ScriptedChatClient(std::vector<Entry> entries) : entries_(entries.begin(), entries.end()) {}

std::shared_ptr<ScriptedChatClient> ScriptedChatClient::from_texts(std::vector<std::string> texts) {
  std::vector<Entry> entries;
  for (auto& t : texts) entries.push_back({std::move(t), false});
  return std::make_shared<ScriptedChatClient>(std::move(entries));
}

std::shared_ptr<ScriptedChatClient> ScriptedChatClient::from_file(const std::filesystem::path& path) {
  std::vector<Entry> entries;
  for (const auto& row : read_jsonl(path)) {
    if (row.is_string()) {
      entries.push_back({row.get<std::string>(), false});
    } else if (row.is_object() && row.contains("error")) {
      entries.push_back({row.at("error").get<std::string>(), true});
    } else if (row.is_object() && row.contains("content")) {
      entries.push_back({row.at("content").get<std::string>(), false});
    } else {
      throw Error(ErrorCode::InvalidConfig, "bad script line in " + path.string());
    }
  }
  return std::make_shared<ScriptedChatClient>(std::move(entries));
}

std::string ScriptedChatClient::complete(const ChatRequest& request) {
  std::lock_guard lock(mu_);
  requests_.push_back(request);
  if (entries_.empty()) throw EndpointError("script exhausted");
  auto entry = std::move(entries_.front());
  entries_.pop_front();
  if (entry.error) throw EndpointError(entry.text);
  return apply_server_stop(entry.text, request.stop);
}

std::size_t ScriptedChatClient::calls() const {
  std::lock_guard lock(mu_);
  return requests_.size();
}

std::size_t ScriptedChatClient::remaining() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::vector<ChatRequest> ScriptedChatClient::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

std::string complete_with_retry(ChatClient& client, const ChatRequest& request, const RetryPolicy& policy) {
  auto backoff = policy.initial_backoff;
  std::string last_error;
  for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
    try {
      return client.complete(request);
    } catch (const EndpointError& e) {
      last_error = e.what();
    }
    if (attempt < policy.max_retries && backoff.count() > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw Error(ErrorCode::ModelError,
              "endpoint failed after " + std::to_string(policy.max_retries) + " retries: " + last_error);
}

}  // namespace analyze_rt
