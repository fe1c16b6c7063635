#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "halucheck/action_language.hpp"
#include "halucheck/tool_result.hpp"
#include "halucheck/unicode.hpp"

namespace halucheck {

/// Retrieval results are cut to this many documents.
inline constexpr std::size_t max_search_results = 5;

struct SearchHit {
    std::string title;
    std::string snippet;
    std::string source;
    bool operator==(const SearchHit&) const = default;
};

class ProviderUnavailable : public Error {
public:
    using Error::Error;
};

/// Returns hits in relevance order. May return more than five; web_search truncates.
class SearchProvider {
public:
    virtual ~SearchProvider() = default;
    virtual std::vector<SearchHit> search(std::string_view query) const = 0;
};

namespace detail {

inline bool is_stopword(std::string_view w) {
    static const std::set<std::string, std::less<>> words = {
        "a", "an", "the", "is", "are", "was", "were", "be", "been", "of", "in", "on", "at", "to", "for",
        "and", "or", "by", "with", "as", "it", "its", "this", "that", "from", "which", "who", "what", "how",
        "has", "have", "had", "do", "does", "did", "not", "but", "so", "than", "then", "there", "their",
        "he", "she", "they", "we", "you", "i", "his", "her", "our", "your", "into", "about", "also",
        "的", "是", "了", "在", "和", "有", "与", "也", "就", "都", "而", "及", "这", "那", "个", "一"};
    return words.count(w) > 0;
}

}  // namespace detail

/// Lowercased alphanumeric words and single Han characters, without stopwords.
inline std::vector<std::string> content_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string word;
    const auto flush = [&] {
        if (!word.empty() && !detail::is_stopword(word)) out.push_back(word);
        word.clear();
    };
    for (char32_t cp : unicode::decode(text)) {
        if (unicode::is_cjk(cp)) {
            flush();
            std::string ch;
            unicode::append_utf8(ch, cp);
            if (!detail::is_stopword(ch)) out.push_back(ch);
        } else if (unicode::is_letter(cp) || unicode::is_digit(cp)) {
            if (cp >= U'A' && cp <= U'Z') cp = cp - U'A' + U'a';
            unicode::append_utf8(word, cp);
        } else if (cp == U'.' && !word.empty() && unicode::is_digit(static_cast<char32_t>(word.back()))) {
            word += '.';  // keep decimals like 0.5 together
        } else {
            flush();
        }
    }
    flush();
    for (auto& w : out)
        while (!w.empty() && w.back() == '.') w.pop_back();
    return out;
}

/// Offline provider: keyword index over a directory of documents (first line title, rest body).
class FixtureSearchProvider final : public SearchProvider {
public:
    struct Document {
        std::string name;
        std::string title;
        std::string body;
    };

    explicit FixtureSearchProvider(std::vector<Document> docs) : docs_(std::move(docs)) { build_index(); }

    static FixtureSearchProvider from_directory(const std::filesystem::path& dir) {
        if (!std::filesystem::is_directory(dir)) throw IoError("search corpus directory not found: " + dir.string());
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(dir))
            if (entry.is_regular_file()) files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        std::vector<Document> docs;
        for (const auto& f : files) {
            std::ifstream in(f);
            std::string title;
            std::getline(in, title);
            std::stringstream rest;
            rest << in.rdbuf();
            docs.push_back({f.filename().string(), std::string(unicode::trim(title)), std::string(unicode::trim(rest.str()))});
        }
        return FixtureSearchProvider(std::move(docs));
    }

    /// Documents sharing at least one content token with the query, best first; ties by name.
    std::vector<SearchHit> search(std::string_view query) const override {
        std::map<std::size_t, std::size_t> score;
        std::set<std::string> seen;
        for (const auto& tok : content_tokens(query)) {
            if (!seen.insert(tok).second) continue;
            auto it = index_.find(tok);
            if (it == index_.end()) continue;
            for (std::size_t d : it->second) ++score[d];
        }
        std::vector<std::pair<std::size_t, std::size_t>> ranked(score.begin(), score.end());
        std::stable_sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return docs_[a.first].name < docs_[b.first].name;
        });
        std::vector<SearchHit> hits;
        for (const auto& [d, s] : ranked) hits.push_back({docs_[d].title, docs_[d].body, docs_[d].name});
        return hits;
    }

    std::size_t size() const noexcept { return docs_.size(); }

private:
    void build_index() {
        for (std::size_t d = 0; d < docs_.size(); ++d) {
            std::set<std::string> toks;
            for (auto& t : content_tokens(docs_[d].title + " " + docs_[d].body)) toks.insert(t);
            for (const auto& t : toks) index_[t].push_back(d);
        }
    }

    std::vector<Document> docs_;
    std::map<std::string, std::vector<std::size_t>, std::less<>> index_;
};

/// Top-5 retrieval. Throws ToolError(no_evidence) on zero hits and
/// ToolError(provider_unavailable) when the provider fails.
inline payload::Fact web_search(std::string_view sentence, const SearchProvider& provider) {
    if (unicode::trim(sentence).empty())
        throw ToolError(payload::FailureCode::invalid_arguments, "search sentence is empty");
    std::vector<SearchHit> hits;
    try {
        hits = provider.search(sentence);
    } catch (const ProviderUnavailable& e) {
        throw ToolError(payload::FailureCode::provider_unavailable, e.what());
    }
    if (hits.empty()) throw ToolError(payload::FailureCode::no_evidence, "no documents found for the query");
    if (hits.size() > max_search_results) hits.resize(max_search_results);
    payload::Fact fact;
    for (const auto& h : hits) fact.snippets.push_back(h.title.empty() ? h.snippet : h.title + ": " + h.snippet);
    fact.text = numbered_list(fact.snippets, false);
    return fact;
}

}  // namespace halucheck
