#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sage/common.hpp"

namespace sage {

struct Interaction {
  UserId user = 0;
  ItemId item = 0;
  std::int64_t timestamp = 0;  // ordinal, not wall-clock

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

using InteractionLog = std::vector<Interaction>;

/// Per-item interaction counts over a catalog of `n_items`.
inline std::vector<double> item_counts(const InteractionLog& log, int n_items) {
  std::vector<double> counts(static_cast<std::size_t>(n_items), 0.0);
  for (const auto& row : log) {
    if (row.item < 0 || row.item >= n_items) {
      throw std::invalid_argument("interaction references item " + std::to_string(row.item) +
                                  " outside catalog of " + std::to_string(n_items));
    }
    counts[static_cast<std::size_t>(row.item)] += 1.0;
  }
  return counts;
}

// CSV: user_id,item_id,timestamp_ordinal

inline void write_interaction_csv(const InteractionLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "user_id,item_id,timestamp_ordinal\n";
  for (const auto& row : log) out << row.user << ',' << row.item << ',' << row.timestamp << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline InteractionLog read_interaction_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  InteractionLog log;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("user_id", 0) == 0) continue;
    if (line.empty()) continue;
    std::istringstream ss(line);
    Interaction row;
    char c1 = 0, c2 = 0;
    if (!(ss >> row.user >> c1 >> row.item >> c2 >> row.timestamp) || c1 != ',' || c2 != ',') {
      throw IoError(path + ":" + std::to_string(line_no) + ": malformed interaction row");
    }
    log.push_back(row);
  }
  return log;
}

}  // namespace sage
