// Copyright (c) 2026 The rnndyn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Synthetic stand-in for the SNIPS benchmark: seven template-generated intents
// with the benchmark's per-intent counts, written in the raw directory layout
// that `rnndyn prepare` reads. Useful for smoke runs when the real corpus is
// not at hand; results on it say nothing about the real data.
//
//   snips_surrogate <out_dir> [seed]

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace {

using Words = std::vector<std::string>;

struct Intent {
  std::string name;
  int count;
  std::vector<std::string> templates;  // {slot} placeholders
};

class Generator {
 public:
  explicit Generator(std::uint64_t seed) : rng_(seed) {
    const Words onsets{"b", "d", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "gr", "st", "tr"};
    const Words vowels{"a", "e", "i", "o", "u", "ai", "ou"};
    const Words codas{"", "n", "r", "s", "l", "x", "th"};
    for (const auto& o : onsets)
      for (const auto& v : vowels)
        for (const auto& c : codas) syllables_.push_back(o + v + c);
  }

  std::string pick(const Words& w) { return w[std::uniform_int_distribution<std::size_t>(0, w.size() - 1)(rng_)]; }

  // Pseudo-word drawn from a fixed pool per slot so the vocabulary stays bounded.
  std::string name(const std::string& slot, int pool) {
    auto& names = pools_[slot];
    if (names.empty()) {
      std::seed_seq seq(slot.begin(), slot.end());
      std::mt19937_64 local(seq);
      for (int i = 0; i < pool; ++i) {
        const int n = 2 + static_cast<int>(local() % 2);
        std::string w;
        for (int k = 0; k < n; ++k) w += syllables_[local() % syllables_.size()];
        names.push_back(w);
      }
    }
    return pick(names);
  }

  std::string fill(const std::string& slot) {
    if (slot == "artist") return name("artist", 180) + (coin(0.4) ? " " + name("artist_last", 120) : "");
    if (slot == "playlist") return pick({"chill", "workout", "road trip", "party", "focus", "sleep", "indie", "jazz"}) +
                                   " " + pick({"mix", "vibes", "hits", "classics", "essentials", "favorites"});
    if (slot == "song") return name("song", 160);
    if (slot == "restaurant") return pick({"a", "the"}) + " " + pick({"italian", "thai", "mexican", "french", "sushi",
                                                                       "indian", "greek", "vegan", "steak", "seafood"}) +
                                     " " + pick({"restaurant", "bistro", "place", "diner", "tavern", "brasserie"});
    if (slot == "party") return std::to_string(1 + static_cast<int>(rng_() % 12));
    if (slot == "city") return name("city", 150);
    if (slot == "time") return pick({"tonight", "tomorrow", "now", "this weekend", "next week", "at noon", "in june",
                                     "on friday", "at 7 pm", "this evening", "in two days"});
    if (slot == "weather") return pick({"rain", "snow", "sunny", "cold", "hot", "windy", "foggy", "humid", "stormy"});
    if (slot == "book") return pick({"the", "a"}) + " " + name("book", 160);
    if (slot == "rating") return std::to_string(1 + static_cast<int>(rng_() % 6));
    if (slot == "work") return name("work", 160) + (coin(0.3) ? " " + pick({"saga", "chronicles", "story", "tale"}) : "");
    if (slot == "worktype") return pick({"movie", "tv show", "album", "song", "book", "game", "picture", "novel"});
    if (slot == "movie") return name("movie", 150);
    if (slot == "cinema") return pick({"the", "nearest", "closest"}) + " " + pick({"cinema", "movie house", "theatre"});
    return slot;
  }

  std::vector<nlohmann::json> render(const std::string& tmpl) {
    std::vector<nlohmann::json> chunks;
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
      const auto open = tmpl.find('{', pos);
      if (open == std::string::npos) {
        chunks.push_back({{"text", tmpl.substr(pos)}});
        break;
      }
      if (open > pos) chunks.push_back({{"text", tmpl.substr(pos, open - pos)}});
      const auto close = tmpl.find('}', open);
      const std::string slot = tmpl.substr(open + 1, close - open - 1);
      chunks.push_back({{"text", fill(slot)}, {"entity", slot}});
      pos = close + 1;
    }
    return chunks;
  }

 private:
  bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }

  std::mt19937_64 rng_;
  Words syllables_;
  std::map<std::string, Words> pools_;
};

std::vector<Intent> intents() {
  return {
      {"AddToPlaylist", 2042,
       {"add {song} to my {playlist} playlist", "put {artist} on {playlist}", "please add this track by {artist} to {playlist}",
        "include {song} in the {playlist} list", "i want {song} by {artist} added to {playlist}",
        "add the album by {artist} to my playlist {playlist}", "can you put {song} onto {playlist}"}},
      {"BookRestaurant", 2073,
       {"book {restaurant} for {party} people {time}", "reserve a table at {restaurant} in {city} {time}",
        "i need a table for {party} at {restaurant}", "make a reservation for {party} {time} in {city}",
        "book a spot at {restaurant} {time}", "can i get a table for {party} people at {restaurant} in {city}"}},
      {"GetWeather", 2100,
       {"what is the weather in {city} {time}", "will it be {weather} in {city} {time}", "forecast for {city} {time}",
        "is it going to {weather} {time}", "how {weather} will it get in {city}", "tell me the weather {time} in {city}"}},
      {"PlayMusic", 2100,
       {"play {song} by {artist}", "play some {artist}", "i want to hear {song}", "start playing music from {artist}",
        "play the {playlist} station", "put on something by {artist} {time}", "play {song}"}},
      {"RateBook", 2056,
       {"rate {book} {rating} out of 6", "give {book} {rating} stars", "i would rate {book} a {rating}",
        "rate this novel {rating} points", "give {rating} out of 6 points to {book}", "my rating for {book} is {rating}"}},
      {"SearchCreativeWork", 2054,
       {"find the {worktype} called {work}", "search for {work}", "look up the {worktype} {work}",
        "where can i find {work}", "show me the {worktype} {work}", "i am looking for a {worktype} named {work}"}},
      {"SearchScreeningEvent", 2059,
       {"what movies are playing at {cinema} {time}", "find showtimes for {movie}", "when is {movie} playing in {city}",
        "show me movie times at {cinema}", "is {movie} showing {time}", "which films are on at {cinema} {time}"}},
  };
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2 || argc > 3) {
    std::cerr << "usage: snips_surrogate <out_dir> [seed]\n";
    return 2;
  }
  namespace fs = std::filesystem;
  const fs::path out = argv[1];
  std::uint64_t seed = 0;
  try {
    if (argc == 3) seed = std::stoull(argv[2]);
  } catch (const std::exception&) {
    std::cerr << "seed must be a non-negative integer\n";
    return 2;
  }
  Generator gen(seed);
  std::size_t total = 0;
  for (const auto& intent : intents()) {
    nlohmann::json records = nlohmann::json::array();
    for (int i = 0; i < intent.count; ++i) records.push_back({{"data", gen.render(gen.pick(intent.templates))}});
    fs::create_directories(out / intent.name);
    std::ofstream os(out / intent.name / ("train_" + intent.name + "_full.json"));
    if (!os) {
      std::cerr << "cannot write under " << out << '\n';
      return 3;
    }
    os << nlohmann::json{{intent.name, records}}.dump(1) << '\n';
    total += static_cast<std::size_t>(intent.count);
  }
  std::cout << total << " utterances in " << out.string() << '\n';
  return 0;
}
