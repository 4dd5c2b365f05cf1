#pragma once

#include <chrono>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace analyze_rt {

struct ChatMessage {
  std::string role;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct SamplingParams {
  double temperature = 0.6;
  double top_p = 0.95;
  int max_tokens_per_call = 4096;
};

/// Connection and sampling settings of one chat-completions model.
struct EndpointSpec {
  std::string base_url;  // e.g. http://localhost:8000/v1
  std::string model_name;
  SamplingParams sampling;
  std::vector<std::string> stop_sequences;
  std::string api_key;

  /// Adds "</Code>" and "</Answer>" if missing.
  void ensure_action_stops();
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  std::vector<std::string> stop;
  SamplingParams sampling;
};

/// Transport failure that may succeed on retry.
class EndpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  /// Returns the assistant completion text. Throws EndpointError.
  virtual std::string complete(const ChatRequest& request) = 0;
};

/// POSTs to {base_url}/chat/completions and returns choices[0].message.content.
class HttpChatClient final : public ChatClient {
 public:
  explicit HttpChatClient(EndpointSpec spec, std::chrono::seconds timeout = std::chrono::seconds(600));
  std::string complete(const ChatRequest& request) override;
  const EndpointSpec& spec() const { return spec_; }

 private:
  EndpointSpec spec_;
  std::chrono::seconds timeout_;
};

/// Replays a fixed list of completions in order. Mimics server-side stop
/// handling: text is cut before the first stop sequence found. A script entry
/// may also be an injected transport error.
class ScriptedChatClient final : public ChatClient {
 public:
  struct Entry {
    std::string text;
    bool error = false;
  };

  explicit ScriptedChatClient(std::vector<Entry> entries);
  static std::shared_ptr<ScriptedChatClient> from_texts(std::vector<std::string> texts);
  /// JSON Lines: each line is either a JSON string (the completion), or an
  /// object {"content": "..."} or {"error": "..."}.
  static std::shared_ptr<ScriptedChatClient> from_file(const std::filesystem::path& path);

  std::string complete(const ChatRequest& request) override;

  std::size_t calls() const;
  std::size_t remaining() const;
  std::vector<ChatRequest> requests() const;

 private:
  mutable std::mutex mu_;
  std::deque<Entry> entries_;
  std::vector<ChatRequest> requests_;
};

/// Cuts text before the earliest occurrence of any stop sequence.
std::string apply_server_stop(std::string_view text, const std::vector<std::string>& stop);

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{250};
};

/// Calls client.complete with exponential backoff; throws Error(ModelError)
/// once max_retries retries have failed.
std::string complete_with_retry(ChatClient& client, const ChatRequest& request, const RetryPolicy& policy);

/// A configured model: its client plus the spec it was built from.
struct ModelEndpoint {
  EndpointSpec spec;
  std::shared_ptr<ChatClient> client;

  ChatRequest make_request(std::vector<ChatMessage> messages) const;
};

}  // namespace analyze_rt
