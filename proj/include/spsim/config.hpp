#pragma once

// Flat key=value configuration files: one `key = value` pair per line,
// `#` comments, blank lines ignored. Repeated keys are preserved in order
// (scenario `event` lines rely on this). Errors carry file and line context.

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "spsim/errors.hpp"

namespace spsim {

class KeyValueFile {
public:
    struct Entry {
        std::string key;
        std::string value;
        int line = 0;
    };

    static KeyValueFile parse_string(const std::string& text, const std::string& name)
    {
        KeyValueFile kv;
        kv.name_ = name;
        std::istringstream in(text);
        std::string raw;
        int line = 0;
        while (std::getline(in, raw)) {
            ++line;
            if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
            std::string trimmed = trim(raw);
            if (trimmed.empty()) continue;
            auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ParseError(name + ":" + std::to_string(line) + ": expected 'key = value'");
            Entry e{trim(trimmed.substr(0, eq)), trim(trimmed.substr(eq + 1)), line};
            if (e.key.empty())
                throw ParseError(name + ":" + std::to_string(line) + ": empty key");
            kv.entries_.push_back(std::move(e));
        }
        return kv;
    }

    static KeyValueFile parse_file(const std::string& path)
    {
        std::ifstream in(path);
        if (!in) throw ParseError("cannot open file '" + path + "'");
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse_string(buf.str(), path);
    }

    const std::string& name() const { return name_; }
    const std::vector<Entry>& entries() const { return entries_; }

    bool has(const std::string& key) const { return find(key) != nullptr; }

    const Entry* find(const std::string& key) const
    {
        for (const auto& e : entries_)
            if (e.key == key) return &e;
        return nullptr;
    }

    std::vector<Entry> all(const std::string& key) const
    {
        std::vector<Entry> out;
        for (const auto& e : entries_)
            if (e.key == key) out.push_back(e);
        return out;
    }

    std::string text(const std::string& key) const
    {
        const Entry* e = find(key);
        if (!e) throw ParseError(name_ + ": missing required key '" + key + "'");
        return e->value;
    }

    std::string text_or(const std::string& key, const std::string& fallback) const
    {
        const Entry* e = find(key);
        return e ? e->value : fallback;
    }

    double number(const std::string& key) const
    {
        const Entry* e = find(key);
        if (!e) throw ParseError(name_ + ": missing required key '" + key + "'");
        return to_number(e->value, e->line);
    }

    double number_or(const std::string& key, double fallback) const
    {
        const Entry* e = find(key);
        return e ? to_number(e->value, e->line) : fallback;
    }

    std::vector<double> numbers(const std::string& key) const
    {
        const Entry* e = find(key);
        if (!e) throw ParseError(name_ + ": missing required key '" + key + "'");
        return split_numbers(e->value, e->line);
    }

    double to_number(const std::string& text, int line) const
    {
        const char* begin = text.c_str();
        char* end = nullptr;
        const double value = std::strtod(begin, &end);
        if (end == begin || trim(std::string(end)) != "")
            throw ParseError(name_ + ":" + std::to_string(line) + ": not a number: '" + text + "'");
        return value;
    }

    std::vector<double> split_numbers(const std::string& text, int line) const
    {
        std::vector<double> out;
        std::string item;
        std::istringstream in(text);
        while (std::getline(in, item, ','))
            out.push_back(to_number(trim(item), line));
        return out;
    }

    static std::string trim(const std::string& s)
    {
        std::size_t b = 0, e = s.size();
        while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
        return s.substr(b, e - b);
    }

private:
    std::string name_ = "<memory>";
    std::vector<Entry> entries_;
};

} // namespace spsim
