#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <set>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cdkt/rng.hpp"
#include "cdkt/text.hpp"

namespace cdkt {

using UserIndex = std::uint32_t;

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class UnknownUserError : public std::out_of_range {
 public:
  explicit UnknownUserError(std::string id)
      : std::out_of_range("unknown user id '" + id + "'"), id_(std::move(id)) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

// Dense indexing of user ids. Indices follow the lexicographic order of ids.
class UserTable {
 public:
  UserTable() = default;

  template <typename Range>
  explicit UserTable(const Range& ids) {
    for (const auto& id : ids) ids_.emplace_back(id);
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
    lookup_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) lookup_.emplace(ids_[i], static_cast<UserIndex>(i));
  }

  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  const std::string& id(UserIndex index) const { return ids_.at(index); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  std::optional<UserIndex> find(std::string_view id) const {
    auto it = lookup_.find(std::string(id));
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }

  UserIndex at(std::string_view id) const {
    if (auto idx = find(id)) return *idx;
    throw UnknownUserError(std::string(id));
  }

  bool contains(std::string_view id) const { return find(id).has_value(); }

  friend bool operator==(const UserTable& a, const UserTable& b) { return a.ids_ == b.ids_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, UserIndex> lookup_;
};

struct Infection {
  std::string user;
  double time = 0.0;

  friend bool operator==(const Infection&, const Infection&) = default;
};

// One observed diffusion. Infections are sorted by (time, user id), and the
// source is the unique user infected at time 0.
struct Cascade {
  std::string id;
  std::string source;
  std::vector<Infection> infections;

  std::size_t size() const noexcept { return infections.size(); }

  friend bool operator==(const Cascade&, const Cascade&) = default;
};

inline void sort_infections(std::vector<Infection>& infections) {
  std::sort(infections.begin(), infections.end(), [](const Infection& a, const Infection& b) {
    if (a.time != b.time) return a.time < b.time;
    return a.user < b.user;
  });
}

// Builds a cascade from unordered infections and checks every invariant.
// Throws std::invalid_argument with a description of the first violation.
inline Cascade make_cascade(std::string id, std::vector<Infection> infections) {
  if (!text::is_valid_id(id)) throw std::invalid_argument("invalid cascade id '" + id + "'");
  if (infections.empty()) throw std::invalid_argument("cascade '" + id + "' has no infections");
  std::unordered_set<std::string> seen;
  const Infection* source = nullptr;
  for (const auto& inf : infections) {
    if (!text::is_valid_id(inf.user)) throw std::invalid_argument("invalid user id '" + inf.user + "'");
    if (!std::isfinite(inf.time)) throw std::invalid_argument("non-finite timestamp for user '" + inf.user + "'");
    if (inf.time < 0.0) throw std::invalid_argument("negative timestamp for user '" + inf.user + "'");
    if (!seen.insert(inf.user).second) throw std::invalid_argument("duplicate user '" + inf.user + "'");
    if (inf.time == 0.0) {
      if (source) {
        throw std::invalid_argument("ambiguous source: users '" + source->user + "' and '" + inf.user +
                                    "' both have timestamp 0");
      }
      source = &inf;
    }
  }
  if (!source) throw std::invalid_argument("no timestamp-0 source user");
  Cascade c;
  c.id = std::move(id);
  c.source = source->user;
  c.infections = std::move(infections);
  sort_infections(c.infections);
  return c;
}

// Parses one `<id>\t<user>:<time>,...` line.
inline Cascade parse_cascade_line(std::string_view line, std::size_t line_no) {
  const auto tab = line.find('\t');
  if (tab == std::string_view::npos) throw ParseError(line_no, "expected '<cascade_id>\\t<infections>'");
  const std::string_view id = line.substr(0, tab);
  const std::string_view body = line.substr(tab + 1);
  if (body.find('\t') != std::string_view::npos) throw ParseError(line_no, "unexpected extra tab");
  if (!text::is_valid_id(id)) throw ParseError(line_no, "invalid cascade id '" + std::string(id) + "'");

  std::vector<Infection> infections;
  for (auto pair : text::split(body, ',')) {
    const auto colon = pair.rfind(':');
    if (colon == std::string_view::npos) {
      throw ParseError(line_no, "expected '<user>:<timestamp>', got '" + std::string(pair) + "'");
    }
    const auto user = pair.substr(0, colon);
    const auto time = text::parse_real(pair.substr(colon + 1));
    if (!text::is_valid_id(user)) throw ParseError(line_no, "invalid user id '" + std::string(user) + "'");
    if (!time) throw ParseError(line_no, "invalid timestamp '" + std::string(pair.substr(colon + 1)) + "'");
    infections.push_back({std::string(user), *time});
  }
  try {
    return make_cascade(std::string(id), std::move(infections));
  } catch (const std::invalid_argument& e) {
    throw ParseError(line_no, e.what());
  }
}

inline std::vector<Cascade> parse_cascades(std::istream& in) {
  std::vector<Cascade> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    out.push_back(parse_cascade_line(line, line_no));
  }
  return out;
}

inline void write_cascade(std::ostream& out, const Cascade& c) {
  out << c.id << '\t';
  for (std::size_t i = 0; i < c.infections.size(); ++i) {
    if (i) out << ',';
    out << c.infections[i].user << ':' << text::format_real(c.infections[i].time);
  }
  out << '\n';
}

inline void write_cascades(std::ostream& out, std::span<const Cascade> cascades) {
  for (const auto& c : cascades) write_cascade(out, c);
}

inline UserTable collect_users(std::span<const Cascade> cascades) {
  std::vector<std::string> ids;
  for (const auto& c : cascades)
    for (const auto& inf : c.infections) ids.push_back(inf.user);
  return UserTable(ids);
}

struct FilteredCascades {
  std::vector<std::string> users;
  std::vector<Cascade> cascades;
};

// Keeps the k most active users (ties by id), strips everyone else, and drops
// cascades that lost their source or fell below two infections. The returned
// user list holds the retained users that still occur in some cascade.
inline FilteredCascades filter_top_users(std::span<const Cascade> cascades, std::size_t k) {
  if (k == 0) throw std::invalid_argument("filter_top_users: k must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& c : cascades)
    for (const auto& inf : c.infections) ++counts[inf.user];

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > k) ranked.resize(k);
  std::unordered_set<std::string> keep;
  for (const auto& [id, n] : ranked) keep.insert(id);

  FilteredCascades out;
  std::set<std::string> present;
  for (const auto& c : cascades) {
    if (!keep.contains(c.source)) continue;
    Cascade kept{c.id, c.source, {}};
    for (const auto& inf : c.infections)
      if (keep.contains(inf.user)) kept.infections.push_back(inf);
    if (kept.infections.size() < 2) continue;
    for (const auto& inf : kept.infections) present.insert(inf.user);
    out.cascades.push_back(std::move(kept));
  }
  out.users.assign(present.begin(), present.end());
  return out;
}

struct CascadeDataset {
  UserTable users;
  std::vector<Cascade> train;
  std::vector<Cascade> test;

  // Throws std::invalid_argument when a cascade references an unknown user or
  // a cascade id appears in both partitions.
  void validate() const {
    std::unordered_set<std::string> train_ids;
    for (const auto& c : train) train_ids.insert(c.id);
    for (const auto& c : test)
      if (train_ids.contains(c.id)) throw std::invalid_argument("cascade '" + c.id + "' is in train and test");
    auto check = [&](const std::vector<Cascade>& cs) {
      for (const auto& c : cs)
        for (const auto& inf : c.infections)
          if (!users.contains(inf.user))
            throw std::invalid_argument("cascade '" + c.id + "' references unknown user '" + inf.user + "'");
    };
    check(train);
    check(test);
  }
};

// Seeded shuffle; the first ceil(fraction * |C|) cascades become the test set.
// The training side always keeps at least one cascade.
inline CascadeDataset split_train_test(std::span<const Cascade> cascades, double test_fraction,
                                       std::uint64_t seed) {
  if (cascades.size() < 2) throw std::invalid_argument("split_train_test: need at least 2 cascades");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("split_train_test: test_fraction must be in (0, 1)");
  std::vector<Cascade> shuffled(cascades.begin(), cascades.end());
  auto rng = make_engine(seed, "split");
  std::shuffle(shuffled.begin(), shuffled.end(), rng);

  const auto n = shuffled.size();
  auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(n) - 1e-9));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

  CascadeDataset ds;
  ds.users = collect_users(shuffled);
  ds.test.assign(std::make_move_iterator(shuffled.begin()),
                 std::make_move_iterator(shuffled.begin() + static_cast<std::ptrdiff_t>(n_test)));
  ds.train.assign(std::make_move_iterator(shuffled.begin() + static_cast<std::ptrdiff_t>(n_test)),
                  std::make_move_iterator(shuffled.end()));
  return ds;
}

// Index-based view of a cascade used on hot paths.
struct IndexedCascade {
  UserIndex source = 0;
  std::vector<UserIndex> users;      // infection order, source first
  std::vector<double> times;         // parallel to users
  std::vector<UserIndex> members;    // sorted user indices of S^c

  bool contains(UserIndex u) const { return std::binary_search(members.begin(), members.end(), u); }

  // Number of users infected strictly after position `pos` in infection order.
  std::size_t later_count(std::size_t pos) const {
    const auto it = std::upper_bound(times.begin(), times.end(), times[pos]);
    return static_cast<std::size_t>(times.end() - it);
  }

  // k-th (0-based) user index not in S^c.
  UserIndex nth_non_member(std::size_t k) const {
    // members[i] - i is non-decreasing; count how many members precede the answer.
    std::size_t lo = 0, hi = members.size();
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (members[mid] - mid <= k) lo = mid + 1;
      else hi = mid;
    }
    return static_cast<UserIndex>(k + lo);
  }
};

inline IndexedCascade index_cascade(const UserTable& users, const Cascade& c) {
  IndexedCascade ic;
  ic.source = users.at(c.source);
  ic.users.reserve(c.infections.size());
  ic.times.reserve(c.infections.size());
  for (const auto& inf : c.infections) {
    ic.users.push_back(users.at(inf.user));
    ic.times.push_back(inf.time);
  }
  ic.members = ic.users;
  std::sort(ic.members.begin(), ic.members.end());
  return ic;
}

}  // namespace cdkt
