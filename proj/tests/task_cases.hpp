#pragma once

// Scripted model for the two-image task harness: answers a chosen set of
// examples correctly and the rest wrongly, keyed by the caption text.

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "sparkles/mock.hpp"
#include "sparkles/task_eval.hpp"

namespace sparkles::test {

inline std::vector<TaskExample> bison_examples(std::size_t n) {
  std::vector<TaskExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    TaskExample ex;
    ex.task = TaskKind::bison;
    ex.example_id = "bison-" + std::to_string(i);
    ex.media = {"left-" + std::to_string(i) + ".jpg", "right-" + std::to_string(i) + ".jpg"};
    ex.image_ids = {"L" + std::to_string(i), "R" + std::to_string(i)};
    ex.text = "caption number " + std::to_string(i) + " of the set";
    ex.gold = i % 3 == 0 ? "IMAGE#2" : "IMAGE#1";
    out.push_back(ex);
  }
  return out;
}

/// Answers example i correctly iff i is in `right`. Replies mention the
/// wrong label before "Therefore" so only tail extraction gets them right.
inline std::shared_ptr<CallbackTransport> scripted_task_model(
    const std::vector<TaskExample>& examples, std::set<std::size_t> right) {
  return std::make_shared<CallbackTransport>([examples, right](const HttpRequest& req) {
    const std::string prompt = last_user_text(Json::parse(req.body));
    for (std::size_t i = 0; i < examples.size(); ++i) {
      if (prompt.find("'" + examples[i].text + "'") == std::string::npos) continue;
      const std::string& gold = examples[i].gold;
      const std::string other = gold == "IMAGE#1" ? "IMAGE#2" : "IMAGE#1";
      const std::string answer = right.count(i) ? gold : other;
      const std::string decoy = right.count(i) ? other : gold;
      return HttpResponse{200, chat_completion_body(
                                   "Let's think step by step. At first " + decoy +
                                   " looks plausible, but the details differ. Therefore, the "
                                   "answer (IMAGE#1 or IMAGE#2) is " + answer + ".")};
    }
    return HttpResponse{404, "{}"};
  });
}

}  // namespace sparkles::test
