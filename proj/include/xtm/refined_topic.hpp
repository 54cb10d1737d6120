#pragma once

#include <map>
#include <string>
#include <vector>

namespace xtm {

struct Vote {
  int count = 0;
  int first_round = 0;  // 1-based round in which the token first appeared
  bool operator==(const Vote&) const = default;
};

using VoteMap = std::map<std::string, Vote>;

/// Outcome of self-consistent refinement for one topic.
struct RefinedTopic {
  int topic_id = 0;
  int rounds_effective = 0;  // successfully parsed rounds behind the votes
  VoteMap votes_l1;
  VoteMap votes_l2;
  std::vector<std::string> selected_l1;
  std::vector<std::string> selected_l2;
  bool short_l1 = false;  // fewer voted tokens than top_m
  bool short_l2 = false;
  bool failed = false;    // no refinement available; contributes no loss

  const VoteMap& votes(int lang) const { return lang == 0 ? votes_l1 : votes_l2; }
  const std::vector<std::string>& selected(int lang) const { return lang == 0 ? selected_l1 : selected_l2; }

  bool operator==(const RefinedTopic&) const = default;
};

}  // namespace xtm
