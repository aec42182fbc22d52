#pragma once

// Pattern-verbalizer pairs: cloze templates over a sentence pair plus a
// single-token verbalizer per label.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fewshot/core_data.hpp"
#include "fewshot/errors.hpp"
#include "fewshot/text.hpp"

namespace fewshot {

// Placeholder for the mask slot in rendered text. Backends locate it through
// ClozeInput::mask_position and substitute their own mask token.
inline constexpr std::string_view kMaskMarker = "[MASK]";
inline constexpr std::string_view kDefaultSeparator = "‖";

struct Segment {
  enum class Kind { literal, slot_u, slot_v, mask, separator };
  Kind kind = Kind::literal;
  std::string text;  // literal only

  static Segment literal(std::string t) { return {Kind::literal, std::move(t)}; }
  static Segment u() { return {Kind::slot_u, {}}; }
  static Segment v() { return {Kind::slot_v, {}}; }
  static Segment mask() { return {Kind::mask, {}}; }
  static Segment separator() { return {Kind::separator, {}}; }

  friend bool operator==(const Segment&, const Segment&) = default;
};

class PatternTemplate {
 public:
  PatternTemplate() = default;
  explicit PatternTemplate(std::vector<Segment> segments) : segments_(std::move(segments)) {
    std::size_t masks = 0, slots = 0, separators = 0;
    for (const auto& s : segments_) {
      masks += s.kind == Segment::Kind::mask;
      slots += s.kind == Segment::Kind::slot_u || s.kind == Segment::Kind::slot_v;
      separators += s.kind == Segment::Kind::separator;
    }
    if (masks != 1) throw ConfigError("a pattern needs exactly one mask slot");
    if (slots == 0) throw ConfigError("a pattern needs at least one sentence slot");
    if (separators > 1) throw ConfigError("a pattern may contain at most one separator");
  }

  // Compact notation: {u}, {v}, {mask} and {sep} are slots, everything else
  // is literal text.
  static PatternTemplate parse(std::string_view notation) {
    std::vector<Segment> segs;
    std::string literal;
    auto flush = [&] {
      if (!literal.empty()) segs.push_back(Segment::literal(std::exchange(literal, {})));
    };
    std::size_t i = 0;
    while (i < notation.size()) {
      auto try_slot = [&](std::string_view tag, Segment seg) {
        if (notation.substr(i, tag.size()) != tag) return false;
        flush();
        segs.push_back(std::move(seg));
        i += tag.size();
        return true;
      };
      if (try_slot("{u}", Segment::u()) || try_slot("{v}", Segment::v()) ||
          try_slot("{mask}", Segment::mask()) || try_slot("{sep}", Segment::separator())) {
        continue;
      }
      literal.push_back(notation[i++]);
    }
    flush();
    return PatternTemplate(std::move(segs));
  }

  const std::vector<Segment>& segments() const { return segments_; }

  std::string notation() const {
    std::string out;
    for (const auto& s : segments_) {
      switch (s.kind) {
        case Segment::Kind::literal: out += s.text; break;
        case Segment::Kind::slot_u: out += "{u}"; break;
        case Segment::Kind::slot_v: out += "{v}"; break;
        case Segment::Kind::mask: out += "{mask}"; break;
        case Segment::Kind::separator: out += "{sep}"; break;
      }
    }
    return out;
  }

  friend bool operator==(const PatternTemplate&, const PatternTemplate&) = default;

 private:
  std::vector<Segment> segments_;
};

class Verbalizer {
 public:
  Verbalizer() = default;
  explicit Verbalizer(std::vector<std::pair<std::string, std::string>> label_to_token)
      : mapping_(std::move(label_to_token)) {
    for (std::size_t i = 0; i < mapping_.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (mapping_[i].first == mapping_[j].first) {
          throw ConfigError("verbalizer maps label '" + mapping_[i].first + "' twice");
        }
        if (mapping_[i].second == mapping_[j].second) {
          throw ConfigError("verbalizer token '" + mapping_[i].second + "' is used twice");
        }
      }
    }
  }

  std::optional<std::string> token_for(std::string_view label) const {
    for (const auto& [l, t] : mapping_) {
      if (l == label) return t;
    }
    return std::nullopt;
  }

  const std::vector<std::pair<std::string, std::string>>& mapping() const { return mapping_; }

  friend bool operator==(const Verbalizer&, const Verbalizer&) = default;

 private:
  std::vector<std::pair<std::string, std::string>> mapping_;
};

struct PVP {
  int id = 0;
  PatternTemplate pattern;
  Verbalizer verbalizer;

  friend bool operator==(const PVP&, const PVP&) = default;
};

struct ClozeInput {
  std::string text;
  std::size_t mask_position = 0;  // byte offset of kMaskMarker in text
  std::optional<std::size_t> segment_boundary;  // byte offset of the separator

  friend bool operator==(const ClozeInput&, const ClozeInput&) = default;
};

using LengthFn = std::function<std::size_t(std::string_view)>;

inline LengthFn whitespace_length() {
  return [](std::string_view s) { return word_count(s); };
}

inline LabelSet builtin_label_set(std::string_view task_id) {
  if (task_id == "bugzilla_duplicate" || task_id == "so_duplicate") {
    return LabelSet(std::string(task_id), {"Neutral", "Duplicate"});
  }
  if (task_id == "bugzilla_entailment") {
    return LabelSet(std::string(task_id), {"Not Entailment", "Entailment"});
  }
  if (task_id == "srs_conflict") {
    return LabelSet(std::string(task_id), {"Neutral", "Duplicate", "Conflict"});
  }
  throw UnknownTaskError("unknown task '" + std::string(task_id) + "'");
}

inline const std::vector<std::string>& builtin_task_ids() {
  static const std::vector<std::string> ids{"bugzilla_duplicate", "bugzilla_entailment",
                                            "so_duplicate", "srs_conflict"};
  return ids;
}

// The three built-in PVPs of each task, in order.
inline std::vector<PVP> builtin_pvps(std::string_view task_id) {
  auto make = [](int id, std::string_view notation, Verbalizer verbalizer) {
    return PVP{id, PatternTemplate::parse(notation), std::move(verbalizer)};
  };
  if (task_id == "bugzilla_entailment") {
    // v precedes u in all three entailment patterns.
    Verbalizer yes_no({{"Not Entailment", "No"}, {"Entailment", "Yes"}});
    return {make(1, "\"{v}\" ? {sep} {mask} , \"{u}\"", yes_no),
            make(2, "{v} ? {sep} {mask} , {u}", yes_no),
            make(3, "\"{v}\" ? {sep} {mask} . \"{u}\"", yes_no)};
  }
  if (task_id == "so_duplicate" || task_id == "bugzilla_duplicate") {
    Verbalizer yes_no({{"Neutral", "No"}, {"Duplicate", "Yes"}});
    const std::string_view noun = task_id == "so_duplicate" ? "question" : "problem";
    return {make(1, "\"{v}\"? {sep} {mask}. \"{u}\".", yes_no),
            make(2, "Are \"{u}\" and \"{v}\" the same " + std::string(noun) + "? {mask} .", yes_no),
            make(3, "Are \"{u}\" and \"{v}\" duplicates? {mask} .", yes_no)};
  }
  if (task_id == "srs_conflict") {
    return {make(1, "\"{u}\"? {sep} {mask}, \"{v}\".",
                 Verbalizer({{"Neutral", "Maybe"}, {"Duplicate", "Yes"}, {"Conflict", "No"}})),
            make(2, "Given \"{u}\", we can conclude that \"{v}\" is {mask}.",
                 Verbalizer({{"Neutral", "neither"}, {"Duplicate", "true"}, {"Conflict", "false"}})),
            make(3, "\"{u}\" means \"{v}\". {sep} {mask}.",
                 Verbalizer({{"Neutral", "Neither"}, {"Duplicate", "True"}, {"Conflict", "False"}}))};
  }
  throw UnknownTaskError("unknown task '" + std::string(task_id) + "'");
}

// Verbalizer tokens in label-set order.
inline std::vector<std::string> verbalizer_tokens(const PVP& pvp, const LabelSet& labels) {
  std::vector<std::string> tokens;
  tokens.reserve(labels.size());
  for (const auto& label : labels.labels()) {
    auto t = pvp.verbalizer.token_for(label);
    if (!t) {
      throw IncompleteVerbalizerError("PVP " + std::to_string(pvp.id) + " has no token for label '" +
                                      label + "'");
    }
    tokens.push_back(std::move(*t));
  }
  return tokens;
}

namespace detail {

// The marker must stay unique, so it is stripped from sentence content.
inline std::string strip_marker(std::string s) {
  for (auto pos = s.find(kMaskMarker); pos != std::string::npos; pos = s.find(kMaskMarker)) {
    s.erase(pos, kMaskMarker.size());
  }
  return s;
}

inline ClozeInput assemble(const PatternTemplate& pattern, std::string_view u, std::string_view v,
                           std::string_view separator) {
  ClozeInput out;
  for (const auto& seg : pattern.segments()) {
    switch (seg.kind) {
      case Segment::Kind::literal: out.text += seg.text; break;
      case Segment::Kind::slot_u: out.text += u; break;
      case Segment::Kind::slot_v: out.text += v; break;
      case Segment::Kind::mask:
        out.mask_position = out.text.size();
        out.text += kMaskMarker;
        break;
      case Segment::Kind::separator:
        out.segment_boundary = out.text.size();
        out.text += separator;
        break;
    }
  }
  return out;
}

}  // namespace detail

namespace detail {

// Drops whole words from the end of the longer sentence (alternating on equal
// length, u first) until fits(u, v) holds or both are empty.
template <typename Fits>
std::pair<std::string, std::string> truncate_longest_first(std::string_view u, std::string_view v, Fits&& fits) {
  const auto u_words = split_whitespace(u);
  const auto v_words = split_whitespace(v);
  std::size_t nu = u_words.size();
  std::size_t nv = v_words.size();
  bool u_on_tie = true;
  while (nu > 0 || nv > 0) {
    if (nu > nv) {
      --nu;
    } else if (nv > nu) {
      --nv;
    } else {
      if (u_on_tie) --nu; else --nv;
      u_on_tie = !u_on_tie;
    }
    auto tu = join_words(u_words, nu);
    auto tv = join_words(v_words, nv);
    if (fits(tu, tv)) return {std::move(tu), std::move(tv)};
  }
  return {};
}

}  // namespace detail

// Render a pair into a cloze input. When the result exceeds max_len under
// length_fn, words are dropped from the end of the longer sentence until it
// fits. Literals, the separator and the mask are never truncated.
inline ClozeInput render(const PVP& pvp, const SentencePair& pair, std::size_t max_len,
                         const LengthFn& length_fn = whitespace_length(),
                         std::string_view separator = kDefaultSeparator) {
  const std::string u = detail::strip_marker(pair.u);
  const std::string v = detail::strip_marker(pair.v);
  auto full = detail::assemble(pvp.pattern, u, v, separator);
  if (length_fn(full.text) <= max_len) return full;

  const auto skeleton = detail::assemble(pvp.pattern, "", "", separator);
  if (length_fn(skeleton.text) > max_len) {
    throw BudgetError("max_len " + std::to_string(max_len) + " cannot hold the pattern skeleton of PVP " +
                      std::to_string(pvp.id));
  }
  auto [tu, tv] = detail::truncate_longest_first(u, v, [&](const std::string& a, const std::string& b) {
    return length_fn(detail::assemble(pvp.pattern, a, b, separator).text) <= max_len;
  });
  return detail::assemble(pvp.pattern, tu, tv, separator);
}

// PVP definition files: {"id", "pattern": [segments], "verbalizer": {label: token}}.
// Segments are {"literal": "..."} or {"slot": "u" | "v" | "mask" | "sep"}.
inline nlohmann::json pvp_to_json(const PVP& pvp) {
  nlohmann::json segments = nlohmann::json::array();
  for (const auto& s : pvp.pattern.segments()) {
    switch (s.kind) {
      case Segment::Kind::literal: segments.push_back({{"literal", s.text}}); break;
      case Segment::Kind::slot_u: segments.push_back({{"slot", "u"}}); break;
      case Segment::Kind::slot_v: segments.push_back({{"slot", "v"}}); break;
      case Segment::Kind::mask: segments.push_back({{"slot", "mask"}}); break;
      case Segment::Kind::separator: segments.push_back({{"slot", "sep"}}); break;
    }
  }
  // An array keeps label order; objects come back key-sorted.
  nlohmann::json verbalizer = nlohmann::json::array();
  for (const auto& [label, token] : pvp.verbalizer.mapping()) verbalizer.push_back({{"label", label}, {"token", token}});
  return {{"id", pvp.id}, {"pattern", segments}, {"verbalizer", verbalizer}};
}

inline PVP pvp_from_json(const nlohmann::json& j) {
  try {
    std::vector<Segment> segs;
    for (const auto& s : j.at("pattern")) {
      if (s.contains("literal")) {
        segs.push_back(Segment::literal(s.at("literal").get<std::string>()));
        continue;
      }
      const auto slot = s.at("slot").get<std::string>();
      if (slot == "u") segs.push_back(Segment::u());
      else if (slot == "v") segs.push_back(Segment::v());
      else if (slot == "mask") segs.push_back(Segment::mask());
      else if (slot == "sep") segs.push_back(Segment::separator());
      else throw ConfigError("unknown pattern slot '" + slot + "'");
    }
    std::vector<std::pair<std::string, std::string>> mapping;
    const auto& vj = j.at("verbalizer");
    if (vj.is_object()) {
      for (auto it = vj.begin(); it != vj.end(); ++it) mapping.emplace_back(it.key(), it.value().get<std::string>());
    } else {
      for (const auto& e : vj) mapping.emplace_back(e.at("label").get<std::string>(), e.at("token").get<std::string>());
    }
    return PVP{j.at("id").get<int>(), PatternTemplate(std::move(segs)), Verbalizer(std::move(mapping))};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed PVP definition: ") + e.what());
  }
}

// A PVP file holds either one PVP object or an array of them.
inline std::vector<PVP> pvps_from_json(const nlohmann::json& j) {
  std::vector<PVP> out;
  if (j.is_array()) {
    for (const auto& e : j) out.push_back(pvp_from_json(e));
  } else {
    out.push_back(pvp_from_json(j));
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      if (out[i].id == out[k].id) throw ConfigError("duplicate PVP id " + std::to_string(out[i].id));
    }
  }
  return out;
}

}  // namespace fewshot
