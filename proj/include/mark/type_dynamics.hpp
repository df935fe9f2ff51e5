#pragma once

// The eight MBTI cognitive functions and the Dominant-Auxiliary-Tertiary-
// Inferior stack they form. Everything here is pure and constexpr-friendly.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mark/errors.hpp"

namespace mark {

enum class Letter : std::uint8_t { Sensing, Intuition, Thinking, Feeling };
enum class Attitude : std::uint8_t { Extraverted, Introverted };
enum class Kind : std::uint8_t { Perceiving, Judging };
enum class StressImpact : std::uint8_t { Positive, Negative };

/// Declaration order is the canonical order Se < Si < Ne < Ni < Te < Ti < Fe < Fi.
enum class CognitiveFunction : std::uint8_t { Se, Si, Ne, Ni, Te, Ti, Fe, Fi };

inline constexpr std::array<CognitiveFunction, 8> kAllFunctions = {
    CognitiveFunction::Se, CognitiveFunction::Si, CognitiveFunction::Ne,
    CognitiveFunction::Ni, CognitiveFunction::Te, CognitiveFunction::Ti,
    CognitiveFunction::Fe, CognitiveFunction::Fi};

/// Position of a function in the type-dynamics hierarchy.
enum class StackPosition : std::uint8_t { Dominant, Auxiliary, Tertiary, Inferior };

inline constexpr std::array<StackPosition, 4> kAllPositions = {
    StackPosition::Dominant, StackPosition::Auxiliary, StackPosition::Tertiary,
    StackPosition::Inferior};

constexpr Letter letter_of(CognitiveFunction f) {
  return static_cast<Letter>(static_cast<int>(f) / 2);
}

constexpr Attitude attitude_of(CognitiveFunction f) {
  return static_cast<int>(f) % 2 == 0 ? Attitude::Extraverted : Attitude::Introverted;
}

constexpr Kind kind_of(CognitiveFunction f) {
  const Letter l = letter_of(f);
  return (l == Letter::Sensing || l == Letter::Intuition) ? Kind::Perceiving
                                                          : Kind::Judging;
}

constexpr CognitiveFunction make_function(Letter l, Attitude a) {
  return static_cast<CognitiveFunction>(static_cast<int>(l) * 2 +
                                        (a == Attitude::Introverted ? 1 : 0));
}

/// S<->N, T<->F.
constexpr Letter opposite(Letter l) {
  switch (l) {
    case Letter::Sensing: return Letter::Intuition;
    case Letter::Intuition: return Letter::Sensing;
    case Letter::Thinking: return Letter::Feeling;
    case Letter::Feeling: return Letter::Thinking;
  }
  return l;
}

constexpr Attitude opposite(Attitude a) {
  return a == Attitude::Extraverted ? Attitude::Introverted : Attitude::Extraverted;
}

constexpr char letter_char(Letter l) {
  constexpr std::array<char, 4> chars = {'S', 'N', 'T', 'F'};
  return chars[static_cast<int>(l)];
}

inline std::string_view function_code(CognitiveFunction f) {
  static constexpr std::array<std::string_view, 8> codes = {"Se", "Si", "Ne", "Ni",
                                                            "Te", "Ti", "Fe", "Fi"};
  return codes[static_cast<int>(f)];
}

/// Canonical display name, e.g. "Introverted Sensing".
inline std::string function_name(CognitiveFunction f) {
  static constexpr std::array<std::string_view, 4> letters = {"Sensing", "Intuition",
                                                              "Thinking", "Feeling"};
  std::string out = attitude_of(f) == Attitude::Extraverted ? "Extraverted " : "Introverted ";
  out += letters[static_cast<int>(letter_of(f))];
  return out;
}

inline std::string_view position_name(StackPosition p) {
  static constexpr std::array<std::string_view, 4> names = {"Dominant", "Auxiliary",
                                                            "Tertiary", "Inferior"};
  return names[static_cast<int>(p)];
}

inline std::optional<StackPosition> parse_position(std::string_view text) {
  std::string lowered;
  for (char c : text) {
    if (std::isalpha(static_cast<unsigned char>(c)))
      lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  for (StackPosition p : kAllPositions) {
    std::string name(position_name(p));
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lowered == name) return p;
  }
  // common misspelling in model output
  if (lowered == "dominate") return StackPosition::Dominant;
  return std::nullopt;
}

inline std::string_view impact_name(StressImpact s) {
  return s == StressImpact::Positive ? "positive" : "negative";
}

inline std::optional<StressImpact> parse_impact(std::string_view text) {
  std::string lowered;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c)))
      lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (lowered == "positive") return StressImpact::Positive;
  if (lowered == "negative") return StressImpact::Negative;
  return std::nullopt;
}

/// Parses free-text process names such as "Introverted Sensing",
/// "Extroverted Feeling", "Extraverted Intuition (Ne)" or "Si".
inline std::optional<CognitiveFunction> parse_function_name(std::string_view text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (char c : text)
    lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));

  auto from_code = [](std::string_view code) -> std::optional<CognitiveFunction> {
    for (CognitiveFunction f : kAllFunctions) {
      std::string c(function_code(f));
      c[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(c[0])));
      if (code == c) return f;
    }
    return std::nullopt;
  };

  std::string letters_only;
  for (char c : lowered)
    if (std::isalpha(static_cast<unsigned char>(c))) letters_only.push_back(c);
  if (letters_only.size() == 2) return from_code(letters_only);

  std::optional<Attitude> attitude;
  int attitude_hits = 0;
  for (std::string_view stem : {"extraver", "extrover", "extravert", "extrovert"}) {
    if (lowered.find(stem) != std::string::npos) {
      attitude = Attitude::Extraverted;
      ++attitude_hits;
      break;
    }
  }
  if (lowered.find("introver") != std::string::npos ||
      lowered.find("introvert") != std::string::npos) {
    attitude = Attitude::Introverted;
    ++attitude_hits;
  }

  std::optional<Letter> letter;
  int letter_hits = 0;
  const std::array<std::pair<std::string_view, Letter>, 4> stems = {
      {{"sens", Letter::Sensing},
       {"intuit", Letter::Intuition},
       {"think", Letter::Thinking},
       {"feel", Letter::Feeling}}};
  for (const auto& [stem, l] : stems) {
    if (lowered.find(stem) != std::string::npos) {
      letter = l;
      ++letter_hits;
    }
  }

  if (attitude_hits == 1 && letter_hits == 1) return make_function(*letter, *attitude);

  // Fall back to a parenthesized code like "(Ne)".
  const auto open = lowered.find('(');
  const auto close = lowered.find(')', open == std::string::npos ? 0 : open);
  if (open != std::string::npos && close != std::string::npos && close == open + 3)
    return from_code(lowered.substr(open + 1, 2));
  return std::nullopt;
}

/// Normal-mode description of each function.
inline std::string_view normal_description(CognitiveFunction f) {
  static constexpr std::array<std::string_view, 8> text = {
      "Acts on concrete data in the here and now. Likes to experience the world"
      "\xE2\x80\x94"
      "active, talkative, and social. Trusts the present, what is tangible and real.",
      "Compares present facts and situations to past experience. Excellent recall for "
      "specific details. Trusts and remembers the past. Stores sensory data that is "
      "important to them for future use.",
      "Sees possibilities in the external world. Enthusiastic and enjoys networking. "
      "Trusts the big picture, and forms patterns and connections, which can then be "
      "shared with others.",
      "Can appear visionary. Connects unconscious images, themes, and connections to "
      "see things in new ways. Brainstorm internally with themselves. Trusts and relies "
      "on inner insights, which may be hard for others to understand.",
      "Seeks logic and consistency in the outside world. Concern for external laws and "
      "rules. Logical, analytical decision-makers who organize the environment to "
      "achieve goals.",
      "Seeks internal consistency and logic of ideas. Trust's internal framework, which "
      "may be difficult to explain to others. Experience a depth of concentration that "
      "is objective and analytical.",
      "Seeks harmony with and between people in the outside world. Interpersonal and "
      "cultural values are important. Encouraging and interested in others.",
      "Seeks harmony of action and thoughts with personal values. May not always "
      "articulate those values. Empathetic, sensitive, and idealistic.",
  };
  return text[static_cast<int>(f)];
}

/// Overused (high-stress) description of each function.
inline std::string_view overused_description(CognitiveFunction f) {
  static constexpr std::array<std::string_view, 8> text = {
      "When the stress level is high, this function will tend to be overindulgent, "
      "hyperactive, and overly talkative.",
      "When the stress level is high, this function will tend to be dogmatic, obsess "
      "about unimportant data, and withdraw.",
      "When the stress level is high, this function will tend to be over the top, "
      "swamped with options, and change for the sake of change.",
      "When the stress level is high, this function will tend to have unrealistic "
      "visions, only accept data that supports their theories, and make things "
      "overcomplicated.",
      "When the stress level is high, this function will tend to be detached, cold, "
      "overly rational, and critique the lack of logic in others.",
      "When the stress level is high, this function will tend to be an obsessive search "
      "for the truth, detached, look only at the cons, driven like a machine out of "
      "control.",
      "When the stress level is high, this function will tend to be insistent, meaning "
      "that they know what is best for everyone, are intrusive, ignore problems, and "
      "force superficial harmony.",
      "When stress levels are high, this function will tend to carry the weight of the "
      "world on their shoulders, be hypersensitive, pompous, and feel sorry for "
      "themselves.",
  };
  return text[static_cast<int>(f)];
}

inline std::string_view function_description(CognitiveFunction f, StressImpact impact) {
  return impact == StressImpact::Positive ? normal_description(f) : overused_description(f);
}

/// The two functions that may follow `dominant`: opposite kind and opposite
/// attitude, in canonical order.
inline std::array<CognitiveFunction, 2> auxiliary_candidates(CognitiveFunction dominant) {
  std::array<CognitiveFunction, 2> out{};
  std::size_t n = 0;
  for (CognitiveFunction f : kAllFunctions) {
    if (kind_of(f) != kind_of(dominant) && attitude_of(f) != attitude_of(dominant))
      out[n++] = f;
  }
  return out;
}

inline bool is_auxiliary_candidate(CognitiveFunction dominant, CognitiveFunction aux) {
  const auto c = auxiliary_candidates(dominant);
  return c[0] == aux || c[1] == aux;
}

struct FunctionStack {
  CognitiveFunction dominant{};
  CognitiveFunction auxiliary{};
  CognitiveFunction tertiary{};
  CognitiveFunction inferior{};
  std::string type_code;

  CognitiveFunction at(StackPosition p) const {
    switch (p) {
      case StackPosition::Dominant: return dominant;
      case StackPosition::Auxiliary: return auxiliary;
      case StackPosition::Tertiary: return tertiary;
      case StackPosition::Inferior: return inferior;
    }
    return dominant;
  }

  friend bool operator==(const FunctionStack&, const FunctionStack&) = default;
};

/// Completes the stack from its first two functions. Tertiary takes the
/// opposite letter of the auxiliary with the dominant's attitude; inferior
/// takes the opposite letter of the dominant with the opposite attitude.
inline FunctionStack derive_stack(CognitiveFunction dominant, CognitiveFunction auxiliary) {
  if (!is_auxiliary_candidate(dominant, auxiliary)) {
    throw InvalidPair(std::string(function_code(auxiliary)) +
                      " cannot be the auxiliary of " + std::string(function_code(dominant)));
  }
  FunctionStack s;
  s.dominant = dominant;
  s.auxiliary = auxiliary;
  s.tertiary = make_function(opposite(letter_of(auxiliary)), attitude_of(dominant));
  s.inferior = make_function(opposite(letter_of(dominant)), opposite(attitude_of(dominant)));

  const CognitiveFunction perceiving = kind_of(dominant) == Kind::Perceiving ? dominant : auxiliary;
  const CognitiveFunction judging = kind_of(dominant) == Kind::Judging ? dominant : auxiliary;
  const CognitiveFunction extraverted =
      attitude_of(dominant) == Attitude::Extraverted ? dominant : auxiliary;

  s.type_code.push_back(attitude_of(dominant) == Attitude::Extraverted ? 'E' : 'I');
  s.type_code.push_back(letter_char(letter_of(perceiving)));
  s.type_code.push_back(letter_char(letter_of(judging)));
  s.type_code.push_back(kind_of(extraverted) == Kind::Judging ? 'J' : 'P');
  return s;
}

/// Inverse of derive_stack's type code. Case-insensitive.
inline FunctionStack stack_from_type(std::string_view code) {
  std::string upper;
  for (char c : code)
    upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  const auto bad = [&] { return UnknownType("unknown personality type: '" + std::string(code) + "'"); };
  if (upper.size() != 4) throw bad();
  if ((upper[0] != 'E' && upper[0] != 'I') || (upper[1] != 'S' && upper[1] != 'N') ||
      (upper[2] != 'T' && upper[2] != 'F') || (upper[3] != 'J' && upper[3] != 'P'))
    throw bad();

  const Attitude dom_attitude = upper[0] == 'E' ? Attitude::Extraverted : Attitude::Introverted;
  const Letter perceiving = upper[1] == 'S' ? Letter::Sensing : Letter::Intuition;
  const Letter judging = upper[2] == 'T' ? Letter::Thinking : Letter::Feeling;
  // J/P names the kind of the extraverted function among the top two.
  const bool extraverted_is_judging = upper[3] == 'J';
  const bool dominant_is_extraverted = dom_attitude == Attitude::Extraverted;
  const bool dominant_is_judging = dominant_is_extraverted == extraverted_is_judging;

  const Letter dom_letter = dominant_is_judging ? judging : perceiving;
  const Letter aux_letter = dominant_is_judging ? perceiving : judging;
  return derive_stack(make_function(dom_letter, dom_attitude),
                      make_function(aux_letter, opposite(dom_attitude)));
}

/// All 16 legal stacks in canonical (dominant, auxiliary) order.
inline std::vector<FunctionStack> all_stacks() {
  std::vector<FunctionStack> out;
  for (CognitiveFunction d : kAllFunctions)
    for (CognitiveFunction a : auxiliary_candidates(d)) out.push_back(derive_stack(d, a));
  return out;
}

/// The 16 type codes in lexicographic order.
inline std::vector<std::string> all_type_codes() {
  std::vector<std::string> out;
  for (const auto& s : all_stacks()) out.push_back(s.type_code);
  std::sort(out.begin(), out.end());
  return out;
}

/// Standard four-role grouping of the 16 types.
enum class TypeRole : std::uint8_t { Analysts, Diplomats, Explorers, Sentinels };

inline constexpr std::array<TypeRole, 4> kAllRoles = {TypeRole::Analysts, TypeRole::Diplomats,
                                                      TypeRole::Explorers, TypeRole::Sentinels};

inline std::string_view role_name(TypeRole r) {
  static constexpr std::array<std::string_view, 4> names = {"Analysts", "Diplomats",
                                                            "Explorers", "Sentinels"};
  return names[static_cast<int>(r)];
}

/// NT = Analysts, NF = Diplomats, SP = Explorers, SJ = Sentinels.
inline TypeRole role_of(std::string_view type_code) {
  const FunctionStack s = stack_from_type(type_code);
  const char sn = s.type_code[1];
  if (sn == 'N') return s.type_code[2] == 'T' ? TypeRole::Analysts : TypeRole::Diplomats;
  return s.type_code[3] == 'P' ? TypeRole::Explorers : TypeRole::Sentinels;
}

inline std::vector<std::string> types_in_role(TypeRole r) {
  std::vector<std::string> out;
  for (const auto& code : all_type_codes())
    if (role_of(code) == r) out.push_back(code);
  return out;
}

}  // namespace mark
