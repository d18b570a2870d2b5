#include "knreader/lemmatizer.hpp"

#include <string>
#include <unordered_map>

#include "knreader/text.hpp"

namespace knreader {
namespace {

const std::unordered_map<std::string, std::string>& irregular_forms() {
  static const std::unordered_map<std::string, std::string> table = {
      {"children", "child"}, {"men", "man"},       {"women", "woman"},   {"mice", "mouse"},
      {"geese", "goose"},    {"feet", "foot"},     {"teeth", "tooth"},   {"people", "person"},
      {"wolves", "wolf"},    {"leaves", "leaf"},   {"knives", "knife"},  {"wives", "wife"},
      {"lives", "life"},     {"loaves", "loaf"},   {"shelves", "shelf"}, {"calves", "calf"},
      {"halves", "half"},    {"thieves", "thief"}, {"oxen", "ox"},       {"dice", "die"},
      {"is", "be"},          {"are", "be"},        {"was", "be"},        {"were", "be"},
      {"been", "be"},        {"being", "be"},      {"am", "be"},         {"has", "have"},
      {"had", "have"},       {"having", "have"},   {"does", "do"},       {"did", "do"},
      {"done", "do"},        {"went", "go"},       {"gone", "go"},       {"goes", "go"},
      {"made", "make"},      {"making", "make"},   {"took", "take"},     {"taken", "take"},
      {"came", "come"},      {"saw", "see"},       {"seen", "see"},      {"ran", "run"},
      {"ate", "eat"},        {"eaten", "eat"},     {"gave", "give"},     {"given", "give"},
      {"said", "say"},       {"told", "tell"},     {"found", "find"},    {"thought", "think"},
      {"began", "begin"},    {"begun", "begin"},   {"flew", "fly"},      {"flown", "fly"},
      {"this", "this"},      {"his", "his"},       {"its", "its"},       {"us", "us"},
      {"news", "news"},      {"glasses", "glass"}, {"dresses", "dress"}, {"bus", "bus"},
  };
  return table;
}

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// "running" -> "runn" -> "run"; leaves "ll", "ss", "zz" alone ("spilled" -> "spill").
std::string undouble(std::string stem) {
  const std::size_t n = stem.size();
  if (n >= 3 && stem[n - 1] == stem[n - 2] && !is_vowel(stem[n - 1]) && stem[n - 1] != 'l' &&
      stem[n - 1] != 's' && stem[n - 1] != 'z') {
    stem.pop_back();
  }
  return stem;
}

bool has_vowel(std::string_view s) {
  for (char c : s) {
    if (is_vowel(c) || c == 'y') return true;
  }
  return false;
}

}  // namespace

std::string default_lemmatize(std::string_view token) {
  std::string w = text::to_lower(token);
  if (auto it = irregular_forms().find(w); it != irregular_forms().end()) return it->second;
  if (w.size() <= 3) return w;

  if (ends_with(w, "ies") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
  if (ends_with(w, "sses")) return w.substr(0, w.size() - 2);
  if (ends_with(w, "xes") || ends_with(w, "ches") || ends_with(w, "shes") || ends_with(w, "zes")) {
    return w.substr(0, w.size() - 2);
  }
  if (ends_with(w, "ing") && w.size() > 5) {
    std::string stem = w.substr(0, w.size() - 3);
    if (has_vowel(stem)) return undouble(stem);
  }
  if (ends_with(w, "ied") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
  if (ends_with(w, "ed") && w.size() > 4) {
    std::string stem = w.substr(0, w.size() - 2);
    if (has_vowel(stem)) return undouble(stem);
  }
  if (ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") && !ends_with(w, "is")) {
    return w.substr(0, w.size() - 1);
  }
  return w;
}

}  // namespace knreader
