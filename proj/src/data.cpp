#include "wr/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace wr {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

[[noreturn]] void record_error(const std::string& path, int64_t line, const std::string& what) {
    throw ValidationError(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

std::vector<std::vector<std::string>> read_story_blocks(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open corpus file: " + path);

    std::vector<std::vector<std::string>> blocks;
    std::vector<std::string> current;
    std::string line;
    auto flush = [&] {
        if (!current.empty()) {
            blocks.push_back(current);
            current.clear();
        }
    };
    while (std::getline(in, line)) {
        if (trim(line).empty())
            flush();
        else
            current.push_back(line);
    }
    flush();
    return blocks;
}

std::vector<std::string> split_sentences(const std::string& story) {
    std::vector<std::string> out;
    std::string cur;
    for (size_t i = 0; i < story.size(); ++i) {
        cur.push_back(story[i]);
        const char c = story[i];
        const bool ender = (c == '.' || c == '!' || c == '?');
        const bool at_break =
            ender && (i + 1 == story.size() ||
                      std::isspace(static_cast<unsigned char>(story[i + 1])));
        if (at_break) {
            std::string s = trim(cur);
            if (!s.empty()) out.push_back(s);
            cur.clear();
        }
    }
    std::string tail = trim(cur);
    if (!tail.empty()) out.push_back(tail);
    return out;
}

std::vector<PretrainPair> split_into_pairs(const std::vector<std::string>& sentences,
                                           const Vocab& vocab, int64_t max_side_len,
                                           int64_t* dropped) {
    std::vector<PretrainPair> pairs;
    for (size_t i = 0; i + 1 < sentences.size(); ++i) {
        PretrainPair p;
        p.context = vocab.encode(sentences[i]);
        p.continuation = vocab.encode(sentences[i + 1]);
        const bool fits = !p.context.empty() && !p.continuation.empty() &&
                          static_cast<int64_t>(p.context.size()) <= max_side_len &&
                          static_cast<int64_t>(p.continuation.size()) <= max_side_len;
        if (fits)
            pairs.push_back(std::move(p));
        else if (dropped)
            ++*dropped;
    }
    return pairs;
}

std::vector<PretrainPair> load_pretrain_pairs(const std::string& path, const Vocab& vocab,
                                              int64_t max_side_len, int64_t* dropped) {
    std::vector<PretrainPair> pairs;
    for (const auto& block : read_story_blocks(path)) {
        std::string story;
        for (const auto& line : block) {
            if (!story.empty()) story.push_back(' ');
            story += line;
        }
        auto from_block = split_into_pairs(split_sentences(story), vocab, max_side_len, dropped);
        pairs.insert(pairs.end(), from_block.begin(), from_block.end());
    }
    return pairs;
}

std::vector<RawTriple> load_raw_triples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open triple file: " + path);

    std::vector<RawTriple> out;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;

        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            record_error(path, lineno, std::string("bad record: ") + e.what());
        }
        if (!rec.is_object()) record_error(path, lineno, "record is not an object");
        for (const char* key : {"context", "positive", "negatives", "source_id"})
            if (!rec.contains(key))
                record_error(path, lineno, std::string("missing field '") + key + "'");

        RawTriple t;
        if (!rec["context"].is_array() || rec["context"].empty() || rec["context"].size() > 5)
            record_error(path, lineno, "context must hold 1 to 5 sentences");
        for (const auto& s : rec["context"]) {
            if (!s.is_string() || trim(s.get<std::string>()).empty())
                record_error(path, lineno, "context sentences must be nonempty strings");
            t.context_sentences.push_back(s.get<std::string>());
        }
        if (!rec["positive"].is_string() || trim(rec["positive"].get<std::string>()).empty())
            record_error(path, lineno, "positive must be a nonempty string");
        t.positive = rec["positive"].get<std::string>();
        if (!rec["negatives"].is_array())
            record_error(path, lineno, "negatives must be a list");
        for (const auto& s : rec["negatives"]) {
            if (!s.is_string() || trim(s.get<std::string>()).empty())
                record_error(path, lineno, "negatives must be nonempty strings");
            if (s.get<std::string>() == t.positive)
                record_error(path, lineno, "positive listed among its own negatives");
            t.negatives.push_back(s.get<std::string>());
        }
        if (!rec["source_id"].is_string() || rec["source_id"].get<std::string>().empty())
            record_error(path, lineno, "source_id must be a nonempty string");
        t.source_id = rec["source_id"].get<std::string>();
        out.push_back(std::move(t));
    }
    return out;
}

void save_raw_triples(const std::string& path, const std::vector<RawTriple>& triples) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write triple file: " + path);
    for (const auto& t : triples) {
        json rec;
        rec["context"] = t.context_sentences;
        rec["positive"] = t.positive;
        rec["negatives"] = t.negatives;
        rec["source_id"] = t.source_id;
        out << rec.dump() << '\n';
    }
    if (!out) throw ValidationError("short write to triple file: " + path);
}

std::vector<Triple> tokenize_triples(const std::vector<RawTriple>& raw, const Vocab& vocab) {
    std::vector<Triple> out;
    out.reserve(raw.size());
    for (const auto& r : raw) {
        Triple t;
        for (const auto& s : r.context_sentences) {
            std::vector<int64_t> ids = vocab.encode(s);
            t.context.insert(t.context.end(), ids.begin(), ids.end());
        }
        t.positive = vocab.encode(r.positive);
        for (const auto& s : r.negatives) t.negatives.push_back(vocab.encode(s));
        t.source_id = r.source_id;
        if (t.context.empty() || t.positive.empty())
            throw ValidationError("triple from source '" + r.source_id +
                                  "' tokenizes to an empty context or positive");
        out.push_back(std::move(t));
    }
    return out;
}

void fabricate_negatives(std::vector<RawTriple>& triples, int64_t m, Rng& rng) {
    if (m < 1) throw ValidationError("fabricate_negatives: m must be >= 1");
    for (auto& t : triples) {
        std::vector<const std::string*> pool;
        for (const auto& other : triples) {
            if (other.source_id == t.source_id) continue;
            // drawing the triple's own positive would break positive ∉ negatives
            if (other.positive == t.positive) continue;
            pool.push_back(&other.positive);
        }
        if (static_cast<int64_t>(pool.size()) < m)
            throw ValidationError("fabricate_negatives: m=" + std::to_string(m) +
                                  " exceeds the " + std::to_string(pool.size()) +
                                  " foreign positives available to source '" + t.source_id +
                                  "'");
        // partial Fisher-Yates gives m distinct draws
        for (int64_t i = 0; i < m; ++i) {
            const uint64_t j = i + rng.below(pool.size() - i);
            std::swap(pool[i], pool[j]);
            t.negatives.push_back(*pool[i]);
        }
    }
}

int64_t fit_triples_to_window(std::vector<Triple>& triples, int64_t max_len) {
    if (max_len <= 2) throw ValidationError("fit_triples_to_window: max_len must exceed 2");
    const size_t side_cap = static_cast<size_t>(max_len - 2);
    int64_t cut = 0;
    auto trim_head = [&](std::vector<int64_t>& seq) {
        if (seq.size() > side_cap) {
            seq.resize(side_cap);
            ++cut;
        }
    };
    for (Triple& t : triples) {
        if (t.context.size() > static_cast<size_t>(max_len)) {
            // the sentences nearest the continuation carry its topic
            t.context.erase(t.context.begin(),
                            t.context.end() - static_cast<ptrdiff_t>(max_len));
            ++cut;
        }
        trim_head(t.positive);
        for (auto& n : t.negatives) trim_head(n);
    }
    return cut;
}

namespace {

// Disjoint topic lexicons: every content word below belongs to exactly one
// topic, so a sentence generated for one topic never contains another
// topic's keywords. Function words ("the", "then", "a", ...) are shared and
// do not count as topic keywords.
struct TopicLexicon {
    const char* name;
    std::vector<const char*> actors;
    std::vector<const char*> verbs;
    std::vector<const char*> objects;
    std::vector<const char*> places;
};

const std::vector<TopicLexicon>& topic_bank() {
    static const std::vector<TopicLexicon> bank = {
        {"kitchen",
         {"cook", "baker"},
         {"stirred", "tasted", "seasoned"},
         {"soup", "bread", "stew"},
         {"oven", "pantry"}},
        {"harbor",
         {"sailor", "captain"},
         {"moored", "rigged", "steered"},
         {"boat", "anchor", "sail"},
         {"dock", "pier"}},
        {"garden",
         {"gardener", "botanist"},
         {"planted", "watered", "pruned"},
         {"rose", "fern", "tulip"},
         {"greenhouse", "hedge"}},
        {"observatory",
         {"astronomer", "stargazer"},
         {"tracked", "charted", "focused"},
         {"comet", "nebula", "telescope"},
         {"dome", "ridge"}},
        {"library",
         {"librarian", "archivist"},
         {"shelved", "catalogued", "stamped"},
         {"novel", "atlas", "manuscript"},
         {"stacks", "archive"}},
        {"forge",
         {"smith", "apprentice"},
         {"hammered", "quenched", "sharpened"},
         {"blade", "horseshoe", "hinge"},
         {"anvil", "furnace"}},
        {"orchard",
         {"farmer", "picker"},
         {"grafted", "harvested", "sorted"},
         {"apple", "pear", "plum"},
         {"barn", "grove"}},
        {"studio",
         {"painter", "sculptor"},
         {"sketched", "glazed", "framed"},
         {"portrait", "vase", "mural"},
         {"easel", "loft"}},
        {"clinic",
         {"doctor", "nurse"},
         {"bandaged", "examined", "treated"},
         {"wound", "fever", "sprain"},
         {"ward", "infirmary"}},
        {"mine",
         {"miner", "foreman"},
         {"drilled", "hauled", "braced"},
         {"ore", "coal", "gemstone"},
         {"shaft", "tunnel"}},
        {"bakeryvan",
         {"driver", "courier"},
         {"loaded", "delivered", "parked"},
         {"crate", "parcel", "pallet"},
         {"depot", "garage"}},
        {"theater",
         {"actor", "director"},
         {"rehearsed", "staged", "performed"},
         {"scene", "costume", "script"},
         {"stage", "balcony"}},
    };
    return bank;
}

std::vector<std::string> lexicon_words(const TopicLexicon& t) {
    std::vector<std::string> words;
    for (const auto* list : {&t.actors, &t.verbs, &t.objects, &t.places})
        for (const char* w : *list) words.emplace_back(w);
    return words;
}

const char* draw(const std::vector<const char*>& words, Rng& rng) {
    return words[rng.below(words.size())];
}

// every template mentions the protagonist plus at least one more topic word
std::string make_sentence(const TopicLexicon& t, const char* actor, Rng& rng) {
    const uint64_t form = rng.below(4);
    std::string v = draw(t.verbs, rng);
    std::string o = draw(t.objects, rng);
    std::string p = draw(t.places, rng);
    std::string a = actor;
    switch (form) {
        case 0: return "the " + a + " " + v + " the " + o + " .";
        case 1: return "the " + a + " " + v + " the " + o + " near the " + p + " .";
        case 2: return "then the " + a + " " + v + " a " + o + " .";
        default: return "the " + a + " went to the " + p + " and " + v + " the " + o + " .";
    }
}

}  // namespace

const std::vector<std::string>& topic_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& t : topic_bank()) out.emplace_back(t.name);
        return out;
    }();
    return names;
}

const std::vector<std::vector<std::string>>& topic_keywords() {
    static const std::vector<std::vector<std::string>> words = [] {
        std::vector<std::vector<std::string>> out;
        for (const auto& t : topic_bank()) out.push_back(lexicon_words(t));
        return out;
    }();
    return words;
}

SyntheticData gen_synthetic(int64_t topics, int64_t stories_per_topic, Rng& rng) {
    const auto& bank = topic_bank();
    if (topics < 2) throw ValidationError("gen_synthetic: need at least 2 topics");
    if (topics > static_cast<int64_t>(bank.size()))
        throw ValidationError("gen_synthetic: at most " + std::to_string(bank.size()) +
                              " topics available");
    if (stories_per_topic < 1)
        throw ValidationError("gen_synthetic: stories_per_topic must be >= 1");

    struct Story {
        int64_t topic;
        std::string id;
        std::vector<std::string> sentences;
    };
    std::vector<Story> stories;
    for (int64_t t = 0; t < topics; ++t) {
        for (int64_t s = 0; s < stories_per_topic; ++s) {
            const TopicLexicon& lex = bank[t];
            // one protagonist per story guarantees a shared topic keyword
            // between any context prefix and its continuation
            const char* actor = draw(lex.actors, rng);
            const int64_t n_sent = 3 + static_cast<int64_t>(rng.below(3));
            Story st;
            st.topic = t;
            st.id = std::string(lex.name) + "_" + std::to_string(s);
            for (int64_t i = 0; i < n_sent; ++i)
                st.sentences.push_back(make_sentence(lex, actor, rng));
            stories.push_back(std::move(st));
        }
    }

    SyntheticData out;
    for (const auto& st : stories) {
        std::string block;
        for (const auto& s : st.sentences) {
            if (!block.empty()) block.push_back(' ');
            block += s;
        }
        out.stories.push_back(block);
    }

    // each split point of each story yields one triple; the negative is a
    // sentence drawn from a story of a different topic
    for (const auto& st : stories) {
        for (size_t i = 1; i < st.sentences.size(); ++i) {
            RawTriple tr;
            tr.context_sentences.assign(st.sentences.begin(), st.sentences.begin() + i);
            tr.positive = st.sentences[i];
            tr.source_id = st.id;

            const Story* other = nullptr;
            do {
                other = &stories[rng.below(stories.size())];
            } while (other->topic == st.topic);
            tr.negatives.push_back(other->sentences[rng.below(other->sentences.size())]);

            out.triples.push_back(std::move(tr));
        }
    }
    return out;
}

PaddedBatch pad_batch(const std::vector<std::vector<int64_t>>& seqs, int64_t pad_id) {
    if (seqs.empty()) throw ValidationError("pad_batch: empty batch");
    size_t width = 0;
    for (const auto& s : seqs) width = std::max(width, s.size());

    PaddedBatch b;
    for (const auto& s : seqs) {
        std::vector<int64_t> row(width, pad_id);
        std::vector<uint8_t> m(width, 0);
        std::copy(s.begin(), s.end(), row.begin());
        std::fill(m.begin(), m.begin() + s.size(), uint8_t(1));
        b.rows.push_back(std::move(row));
        b.mask.push_back(std::move(m));
    }
    return b;
}

}  // namespace wr
