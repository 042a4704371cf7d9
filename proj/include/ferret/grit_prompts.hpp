#pragma once

// Chat prompts for the LLM-assisted parts of data generation (semantic
// negatives, refer-and-ground conversations, reasoning, refinement) and a
// minimal client interface. Only canned responses are served in-process.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ferret/error.hpp"
#include "ferret/grit.hpp"

namespace ferret::grit {

struct ChatMessage {
  std::string role;
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

struct ChatPrompt {
  std::vector<ChatMessage> messages;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const ChatMessage& m : messages) arr.push_back({{"role", m.role}, {"content", m.content}});
    return arr;
  }
  // Byte-stable serialization; also the request body sent to a client.
  std::string render() const { return to_json().dump(2); }
};

inline constexpr std::string_view kSemanticNegativeSystem =
    R"(You are an AI visual assistant that can analyze a single image. You receive several entities given by a list, each describing the objects in the image you are observing.

For each entity mentioned, change them with the most misleading entity name (may belong to the same category but are actually different) (nonexistent objects: man → woman, nonexistent attributes: brown → yellow, nonexistent quantities: two → three, etc.). The instructions should contain interrogative and declarative sentences.

The output format needs to be a list only which contains the misleading entity names. Please follow the instructions carefully.

1. The length of the output list needs to be exactly equal to the input list.

2. Do not explain the reasons.

3. Do not mention the input entities, at least the output name and input name needs to be different.

4. Do not mention something abstract, like "alien".

5. When dealing with quantities, focus solely on increasing the numbers during revision.

6. When dealing with words like "a few", "a group", "several", "some", etc., try changing the objects (A few men → A few women).

7. Ensure that inclusive words are not substituted with their specific subsets. For example, if the word is "people," avoid replacing it with genders like "man" or "woman." Instead, consider modifying them to different categories, such as "people" → "animals.".)";

inline constexpr std::string_view kConversationSystem =
    R"(You are an AI visual assistant that can analyze a single image. You receive five global captions, each describing the same image you are observing. In addition, specific object locations within the image are given, along with detailed coordinates. These coordinates are in the form of bounding boxes, represented as (x1, y1, x2, y2) with floating numbers ranging from 0 to 1. These values correspond to the top left x, top left y, bottom right x, and bottom right y. Also, the relationships between pairs of objects are provided in the format of object → relationship → subject, where the object/subject are indexed by object id from previous object lists as well as the object names. Also, several region descriptions are given, each describing a box region of the image, with detailed coordinates.

Design a conversation between you and a person asking about this photo. Ask diverse questions and give corresponding answers. The answers should be in a tone that a visual AI assistant is seeing the image and answering the question.

Here are some additional requirements about generated questions and answers:

1. Only include questions that have definite answers:
(1) one can see the content in the image that the question asks about and can answer confidently;
(2) one can determine confidently from the image that it is not in the image.
Do not ask any questions that cannot be answered confidently.

2. Also include complex questions that are relevant to the content in the image, for example, asking about background knowledge of the objects in the image, asking to discuss events happening in the image, asking about object actions in the context of entire images, etc. Again, do not ask about uncertain details.

3. Provide detailed answers when answering complex questions. For example, give detailed examples or reasoning steps to make the content more convincing and well-organized.  You can include multiple paragraphs if necessary.

4. In all samples, either in question or answer, you must mention bounding box coordinates to refer to the object or regions instead of directly saying the object name or describing the regions in text. In answer, explain the region in the context of the scene.

5. Do not mention that the information source is provided in the text/caption/region description.  Always answer as if you are directly looking at the image.

6. Make the question as diverse as possible. Include questions asking about the visual content of the image, including the object types, counting the objects, object actions, object locations, relative positions between objects, object selection, object functions, etc. Make the question challenging by less including the visual content details in the question.)";

inline constexpr std::string_view kReasoningSystem =
    R"(You are an AI visual assistant that can analyze a single image. You receive five global captions, each describing the same image you are observing. In addition, specific object locations within the image are given, along with detailed coordinates. These coordinates are in the form of bounding boxes, represented as (x1, y1, x2, y2) with floating numbers ranging from 0 to 1. These values correspond to the top left x, top left y, bottom right x, and bottom right y. Also, the relationships between pairs of objects are provided, in the format of object → relationship → subject, where the object/subject are indexed by object id from previous object lists as well as the object names. Also, several region descriptions are given, each describing a box region of the image, with detailed coordinates.

The task is to use the provided image information (objects, attribute, relationship, region description, captions), create a plausible and challenging question about the image, and provide the answer in detail.

Create complex questions that mention specific regions of the image, but the question should require some knowledge-aware or high-level commonsense reasoning beyond describing the scene.

To answer such questions, one should first understand the visual content, then based on the background knowledge or reasoning, either explain why the things are happening that way or provide guides and help to the user's request.  Make the question challenging by not including the visual content details in the question so that the user needs to reason about that first.

Here are some additional requirements about generated questions and answers:

1. In question or answer, you must mention bounding box coordinates to refer to the object or regions, instead of directly say the object name or describing the regions in text.  In answers, explain the region in the context of scene. Include details like object counts, position of the objects, relative position between the objects.

2. Don't ask the question you are not confident to answer.  Only include question that have definite answer.

3. Do not mention that the information source is provided in text/catpion/region description.  Always answer as if you are directly looking at the image.

4. Make the question as diverse as possible and as complex-reasoning required as possible.)";

inline constexpr std::string_view kRefineSystem =
    R"(You are an AI visual assistant reviewing a generated conversation about a single image. Rewrite it so that every object or region it refers to carries its bounding box coordinates, coordinates agree with the provided scene information, and statements the scene information does not support are removed. Keep the Question/Answer layout and change nothing else.)";

/// System prompt plus the entity list; the user turn states the expected
/// output length.
inline ChatPrompt build_semantic_negative_prompt(std::span<const std::string> entities) {
  if (entities.empty()) throw Error(ErrorCode::kInvalidArgument, "semantic negative prompt needs at least one entity");
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const std::string& e : entities) list.push_back(e);
  std::string user = "Entities: " + list.dump() + "\nReturn a list of exactly " + std::to_string(entities.size()) +
                     (entities.size() == 1 ? " misleading entity name." : " misleading entity names.");
  return {{{"system", std::string(kSemanticNegativeSystem)}, {"user", std::move(user)}}};
}

/// Reads the misleading-name list from a model reply: a JSON array of
/// strings, or a bracketed comma list with optional quotes.
inline std::vector<std::string> parse_entity_list(std::string_view reply) {
  const std::size_t open = reply.find('[');
  const std::size_t close = reply.rfind(']');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    throw Error(ErrorCode::kFormat, "reply contains no list");
  }
  const std::string_view body = reply.substr(open, close - open + 1);
  auto parsed = nlohmann::json::parse(body, nullptr, false);
  std::vector<std::string> out;
  if (parsed.is_array() && std::all_of(parsed.begin(), parsed.end(), [](const auto& v) { return v.is_string(); })) {
    for (const auto& v : parsed) out.push_back(v.get<std::string>());
    return out;
  }
  std::string cur;
  auto flush = [&] {
    std::size_t b = cur.find_first_not_of(" \t\n'\"");
    std::size_t e = cur.find_last_not_of(" \t\n'\"");
    out.push_back(b == std::string::npos ? std::string() : cur.substr(b, e - b + 1));
    cur.clear();
  };
  for (char ch : body.substr(1, body.size() - 2)) {
    if (ch == ',') {
      flush();
    } else {
      cur.push_back(ch);
    }
  }
  flush();
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

// Scene text in the layout of the in-context examples: relative
// coordinates with three decimals.
inline std::string render_scene_context(const SceneRecord& scene) {
  std::string out = "Objects\n";
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    out += "Object " + std::to_string(i) + ": " + scene.objects[i].name + " at " +
           format_relative(scene.objects[i].box) + ".\n";
  }
  out += "Relationships\n";
  for (const Relationship& r : scene.relationships) {
    out += "Object " + std::to_string(r.object) + " : " + scene.objects[r.object].name + " → " + r.predicate +
           " → Object " + std::to_string(r.subject) + " : " + scene.objects[r.subject].name + "\n";
  }
  out += "Region Descriptions\n";
  for (const RegionDescription& d : scene.regions) {
    out += "Region Description at " + format_relative(d.box) + " : " + d.text + "\n";
  }
  out += "Global Caption\n";
  for (const std::string& c : scene.captions) out += c + "\n";
  return out;
}

struct FewShotExample {
  std::string context;
  std::string response;
};

enum class DialogueKind { kConversation, kReasoning };

inline ChatPrompt build_dialogue_prompt(DialogueKind kind, const SceneRecord& scene,
                                        std::span<const FewShotExample> fewshot) {
  ChatPrompt p;
  p.messages.push_back(
      {"system", std::string(kind == DialogueKind::kConversation ? kConversationSystem : kReasoningSystem)});
  for (const FewShotExample& ex : fewshot) {
    p.messages.push_back({"user", ex.context});
    p.messages.push_back({"assistant", ex.response});
  }
  p.messages.push_back({"user", render_scene_context(scene)});
  return p;
}

// Second pass over a generated dialogue.
inline ChatPrompt build_refine_prompt(const SceneRecord& scene, std::string_view dialogue) {
  return {{{"system", std::string(kRefineSystem)},
           {"user", render_scene_context(scene) + "\nConversation\n" + std::string(dialogue)}}};
}

// ---- clients -------------------------------------------------------------------

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const ChatPrompt& prompt) = 0;
};

// Serves responses from a queue, in order.
class CannedLlmClient : public LlmClient {
 public:
  explicit CannedLlmClient(std::vector<std::string> responses) : responses_(responses.begin(), responses.end()) {}

  std::string complete(const ChatPrompt& prompt) override {
    requests_.push_back(prompt.render());
    if (responses_.empty()) throw Error(ErrorCode::kIo, "canned LLM client has no responses left");
    std::string r = std::move(responses_.front());
    responses_.pop_front();
    return r;
  }

  const std::vector<std::string>& requests() const { return requests_; }

 private:
  std::deque<std::string> responses_;
  std::vector<std::string> requests_;
};

// Retries a failing inner client up to `retries` extra times.
class RetryingLlmClient : public LlmClient {
 public:
  RetryingLlmClient(std::unique_ptr<LlmClient> inner, int retries) : inner_(std::move(inner)), retries_(retries) {}

  std::string complete(const ChatPrompt& prompt) override {
    for (int attempt = 0;; ++attempt) {
      try {
        return inner_->complete(prompt);
      } catch (const Error&) {
        if (attempt >= retries_) throw;
      }
    }
  }

 private:
  std::unique_ptr<LlmClient> inner_;
  int retries_;
};

struct LlmClientConfig {
  std::string endpoint;  // "canned:<file>" (one JSON string or raw line per response)
  int retries = 2;
  int timeout_ms = 30000;

  static LlmClientConfig from_env() {
    LlmClientConfig cfg;
    if (const char* e = std::getenv("FERRET_LLM_ENDPOINT")) cfg.endpoint = e;
    if (const char* r = std::getenv("FERRET_LLM_RETRIES")) {
      char* end = nullptr;
      const long v = std::strtol(r, &end, 10);
      if (end == r || *end != '\0' || v < 0 || v > 100) {
        throw Error(ErrorCode::kInvalidArgument, "FERRET_LLM_RETRIES must be an integer in [0, 100]");
      }
      cfg.retries = static_cast<int>(v);
    }
    if (const char* t = std::getenv("FERRET_LLM_TIMEOUT_MS")) cfg.timeout_ms = std::atoi(t);
    return cfg;
  }
};

inline std::unique_ptr<LlmClient> make_llm_client(const LlmClientConfig& cfg) {
  constexpr std::string_view kCanned = "canned:";
  if (cfg.endpoint.rfind(kCanned, 0) != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "unsupported LLM endpoint '" + cfg.endpoint + "'; only canned:<file> is served in-process");
  }
  const std::string path = cfg.endpoint.substr(kCanned.size());
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::vector<std::string> responses;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    responses.push_back(j.is_string() ? j.get<std::string>() : line);
  }
  return std::make_unique<RetryingLlmClient>(std::make_unique<CannedLlmClient>(std::move(responses)), cfg.retries);
}

/// Asks the client for misleading replacements and builds the balanced-ready
/// positive/negative pairs.
inline std::vector<InstructionSample> mine_negative_semantic(const SceneRecord& scene,
                                                             std::span<const std::string> entities,
                                                             LlmClient& client, const CompileOptions& opts,
                                                             std::uint64_t seed) {
  const std::vector<std::string> misleading = parse_entity_list(client.complete(build_semantic_negative_prompt(entities)));
  return semantic_negative_samples(scene, entities, misleading, opts, seed);
}

}  // namespace ferret::grit
