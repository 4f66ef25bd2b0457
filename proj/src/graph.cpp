#include "sega/graph.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sega/errors.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace sega {

namespace {

constexpr const char* kRelationNames[kRelationCount] = {"following", "followers", "membership",
                                                        "followed", "own"};

const char* kind_name(NodeKind k) { return k == NodeKind::user ? "user" : "list"; }

[[noreturn]] void fail(const std::string& file, size_t line, const std::string& msg) {
    throw DataError(file + ":" + std::to_string(line) + ": " + msg);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

void keep_recent_tweets(std::vector<std::string>& tweets) {
    if (tweets.size() > static_cast<size_t>(kMaxTweets))
        tweets.erase(tweets.begin(), tweets.end() - kMaxTweets);
}

}  // namespace

const char* relation_name(Relation r) { return kRelationNames[static_cast<int>(r)]; }

std::optional<Relation> parse_relation(const std::string& name) {
    for (int i = 0; i < kRelationCount; ++i)
        if (name == kRelationNames[i]) return static_cast<Relation>(i);
    return std::nullopt;
}

NodeKind relation_src_kind(Relation r) {
    return r == Relation::membership ? NodeKind::list : NodeKind::user;
}

NodeKind relation_dst_kind(Relation r) {
    switch (r) {
        case Relation::following:
        case Relation::followers:
        case Relation::membership:
            return NodeKind::user;
        case Relation::followed:
        case Relation::own:
            return NodeKind::list;
    }
    return NodeKind::user;
}

const char* class_name(UserClass c) {
    switch (c) {
        case UserClass::normal: return "normal";
        case UserClass::bot: return "bot";
        case UserClass::troll: return "troll";
    }
    return "?";
}

std::optional<UserClass> parse_class(const std::string& name) {
    if (name == "normal") return UserClass::normal;
    if (name == "bot") return UserClass::bot;
    if (name == "troll") return UserClass::troll;
    return std::nullopt;
}

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::valid: return "valid";
        case Split::test: return "test";
    }
    return "?";
}

std::optional<Split> parse_split(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "valid") return Split::valid;
    if (name == "test") return Split::test;
    return std::nullopt;
}

void HeteroGraph::canonicalize() {
    std::sort(users.begin(), users.end(),
              [](const UserRecord& a, const UserRecord& b) { return a.id < b.id; });
    std::sort(lists.begin(), lists.end(),
              [](const ListRecord& a, const ListRecord& b) { return a.id < b.id; });
    for (auto& es : edges) std::sort(es.begin(), es.end());
}

size_t HeteroGraph::edge_count() const {
    size_t n = 0;
    for (const auto& es : edges) n += es.size();
    return n;
}

GraphIndex GraphIndex::build(const HeteroGraph& g) {
    auto violations = validate(g);
    if (!violations.empty()) {
        std::string msg = "graph validation failed:";
        for (const auto& v : violations) msg += "\n  - " + v;
        throw DataError(msg);
    }
    GraphIndex idx;
    idx.g_ = &g;
    for (int i = 0; i < static_cast<int>(g.users.size()); ++i)
        idx.by_id_.emplace(g.users[i].id, NodeRef{NodeKind::user, i});
    for (int i = 0; i < static_cast<int>(g.lists.size()); ++i)
        idx.by_id_.emplace(g.lists[i].id, NodeRef{NodeKind::list, i});
    const int n = g.node_count();
    for (int r = 0; r < kRelationCount; ++r) {
        idx.in_adj_[r].assign(n, {});
        idx.out_adj_[r].assign(n, {});
        for (const auto& e : g.edges[r]) {
            const int s = idx.global_index(*idx.find(e.src));
            const int d = idx.global_index(*idx.find(e.dst));
            idx.out_adj_[r][s].push_back(d);
            idx.in_adj_[r][d].push_back(s);
        }
        // edges are canonically sorted by id, which matches global index order
        for (auto& v : idx.in_adj_[r]) std::sort(v.begin(), v.end());
        for (auto& v : idx.out_adj_[r]) std::sort(v.begin(), v.end());
    }
    return idx;
}

std::optional<NodeRef> GraphIndex::find(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

const std::string& GraphIndex::node_id(int global) const {
    if (global < user_count()) return g_->users[global].id;
    return g_->lists[global - user_count()].id;
}

std::vector<std::string> GraphIndex::neighbors(const std::string& id, Relation r) const {
    auto ref = find(id);
    if (!ref) throw DataError("neighbors: unknown node id '" + id + "'");
    std::vector<std::string> out;
    for (int d : out_adj_[static_cast<int>(r)][global_index(*ref)]) out.push_back(node_id(d));
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> validate(const HeteroGraph& g) {
    std::vector<std::string> out;
    std::unordered_map<std::string, NodeKind> kinds;
    for (const auto& u : g.users) {
        if (!kinds.emplace(u.id, NodeKind::user).second)
            out.push_back("duplicate node id '" + u.id + "'");
        for (float v : u.numericals)
            if (!std::isfinite(v)) {
                out.push_back("user '" + u.id + "' has a non-finite numerical feature");
                break;
            }
        if (u.tweets.size() > static_cast<size_t>(kMaxTweets))
            out.push_back("user '" + u.id + "' holds more than " + std::to_string(kMaxTweets) +
                          " tweets");
        if (u.split && !u.label)
            out.push_back("user '" + u.id + "' is in a split but has no label");
    }
    for (const auto& l : g.lists) {
        if (!kinds.emplace(l.id, NodeKind::list).second)
            out.push_back("duplicate node id '" + l.id + "'");
        for (float v : l.numericals)
            if (!std::isfinite(v)) {
                out.push_back("list '" + l.id + "' has a non-finite numerical feature");
                break;
            }
        if (l.tweets.size() > static_cast<size_t>(kMaxTweets))
            out.push_back("list '" + l.id + "' holds more than " + std::to_string(kMaxTweets) +
                          " tweets");
    }
    for (int r = 0; r < kRelationCount; ++r) {
        const auto rel = static_cast<Relation>(r);
        std::set<std::pair<std::string, std::string>> seen;
        for (const auto& e : g.edges[r]) {
            auto s = kinds.find(e.src);
            auto d = kinds.find(e.dst);
            const std::string tag =
                std::string(relation_name(rel)) + " edge " + e.src + " -> " + e.dst;
            if (s == kinds.end()) {
                out.push_back(tag + ": unknown source node");
                continue;
            }
            if (d == kinds.end()) {
                out.push_back(tag + ": unknown destination node");
                continue;
            }
            if (s->second != relation_src_kind(rel) || d->second != relation_dst_kind(rel))
                out.push_back(tag + ": relation requires " + kind_name(relation_src_kind(rel)) +
                              " -> " + kind_name(relation_dst_kind(rel)) + ", got " +
                              kind_name(s->second) + " -> " + kind_name(d->second));
            if (!seen.emplace(e.src, e.dst).second)
                out.push_back("duplicate " + tag);
        }
    }
    return out;
}

namespace {

json parse_json_line(const std::string& file, size_t line_no, const std::string& line) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        fail(file, line_no, std::string("malformed JSON: ") + e.what());
    }
}

}  // namespace

HeteroGraph load_dataset(const std::string& dir) {
    for (const char* name :
         {"nodes.jsonl", "tweets.jsonl", "edges.csv", "labels.csv", "splits.csv"})
        if (!fs::exists(fs::path(dir) / name))
            throw DataError("dataset: missing " + (fs::path(dir) / name).string());

    HeteroGraph g;
    std::unordered_map<std::string, NodeKind> kinds;

    {
        const auto path = (fs::path(dir) / "nodes.jsonl").string();
        std::ifstream in(path);
        std::string line;
        size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            json j = parse_json_line(path, line_no, line);
            if (!j.contains("id") || !j.contains("kind")) fail(path, line_no, "missing id/kind");
            const std::string id = j["id"].get<std::string>();
            const std::string kind = j["kind"].get<std::string>();
            if (kinds.count(id)) fail(path, line_no, "duplicate node id '" + id + "'");
            const auto inds = j.value("indicators", std::vector<bool>{});
            const auto nums = j.value("numericals", std::vector<double>{});
            for (double v : nums)
                if (!std::isfinite(v)) fail(path, line_no, "non-finite numerical for '" + id + "'");
            if (kind == "user") {
                if (inds.size() != kUserIndicators || nums.size() != kUserNumericals)
                    fail(path, line_no,
                         "user '" + id + "' needs " + std::to_string(kUserIndicators) +
                             " indicators and " + std::to_string(kUserNumericals) + " numericals");
                UserRecord u;
                u.id = id;
                for (int i = 0; i < kUserIndicators; ++i) u.indicators[i] = inds[i];
                for (int i = 0; i < kUserNumericals; ++i) u.numericals[i] = static_cast<float>(nums[i]);
                u.description = j.value("description", std::string());
                g.users.push_back(std::move(u));
                kinds.emplace(id, NodeKind::user);
            } else if (kind == "list") {
                if (inds.size() != kListIndicators || nums.size() != kListNumericals)
                    fail(path, line_no,
                         "list '" + id + "' needs " + std::to_string(kListIndicators) +
                             " indicators and " + std::to_string(kListNumericals) + " numericals");
                ListRecord l;
                l.id = id;
                for (int i = 0; i < kListIndicators; ++i) l.indicators[i] = inds[i];
                for (int i = 0; i < kListNumericals; ++i) l.numericals[i] = static_cast<float>(nums[i]);
                l.description = j.value("description", std::string());
                g.lists.push_back(std::move(l));
                kinds.emplace(id, NodeKind::list);
            } else {
                fail(path, line_no, "unknown node kind '" + kind + "'");
            }
        }
    }

    g.canonicalize();
    auto user_by_id = [&](const std::string& id) -> UserRecord* {
        auto it = std::lower_bound(g.users.begin(), g.users.end(), id,
                                   [](const UserRecord& u, const std::string& v) { return u.id < v; });
        return (it != g.users.end() && it->id == id) ? &*it : nullptr;
    };
    auto list_by_id = [&](const std::string& id) -> ListRecord* {
        auto it = std::lower_bound(g.lists.begin(), g.lists.end(), id,
                                   [](const ListRecord& l, const std::string& v) { return l.id < v; });
        return (it != g.lists.end() && it->id == id) ? &*it : nullptr;
    };

    {
        const auto path = (fs::path(dir) / "tweets.jsonl").string();
        std::ifstream in(path);
        std::string line;
        size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            json j = parse_json_line(path, line_no, line);
            if (!j.contains("id")) fail(path, line_no, "missing id");
            const std::string id = j["id"].get<std::string>();
            auto tweets = j.value("tweets", std::vector<std::string>{});
            keep_recent_tweets(tweets);
            if (auto* u = user_by_id(id)) {
                u->tweets = std::move(tweets);
            } else if (auto* l = list_by_id(id)) {
                l->tweets = std::move(tweets);
            } else {
                fail(path, line_no, "tweets for unknown node '" + id + "'");
            }
        }
    }

    {
        const auto path = (fs::path(dir) / "edges.csv").string();
        std::ifstream in(path);
        std::string line;
        size_t line_no = 0;
        if (!std::getline(in, line) || split_csv(line) != std::vector<std::string>{"src", "relation", "dst"})
            fail(path, 1, "expected header 'src,relation,dst'");
        line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            auto cols = split_csv(line);
            if (cols.size() != 3) fail(path, line_no, "expected 3 columns");
            auto rel = parse_relation(cols[1]);
            if (!rel) fail(path, line_no, "unknown relation '" + cols[1] + "'");
            if (!kinds.count(cols[0]))
                fail(path, line_no, "edge source '" + cols[0] + "' does not exist");
            if (!kinds.count(cols[2]))
                fail(path, line_no, "edge destination '" + cols[2] + "' does not exist");
            g.edges[static_cast<int>(*rel)].push_back(RawEdge{cols[0], cols[2]});
        }
    }

    {
        const auto path = (fs::path(dir) / "labels.csv").string();
        std::ifstream in(path);
        std::string line;
        size_t line_no = 0;
        if (!std::getline(in, line) || split_csv(line) != std::vector<std::string>{"id", "label"})
            fail(path, 1, "expected header 'id,label'");
        line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            auto cols = split_csv(line);
            if (cols.size() != 2) fail(path, line_no, "expected 2 columns");
            auto cls = parse_class(cols[1]);
            if (!cls) fail(path, line_no, "unknown label '" + cols[1] + "'");
            auto* u = user_by_id(cols[0]);
            if (!u) fail(path, line_no, "label for unknown user '" + cols[0] + "'");
            u->label = *cls;
        }
    }

    {
        const auto path = (fs::path(dir) / "splits.csv").string();
        std::ifstream in(path);
        std::string line;
        size_t line_no = 0;
        if (!std::getline(in, line) || split_csv(line) != std::vector<std::string>{"id", "split"})
            fail(path, 1, "expected header 'id,split'");
        line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            auto cols = split_csv(line);
            if (cols.size() != 2) fail(path, line_no, "expected 2 columns");
            auto sp = parse_split(cols[1]);
            if (!sp) fail(path, line_no, "unknown split '" + cols[1] + "'");
            auto* u = user_by_id(cols[0]);
            if (!u) fail(path, line_no, "split for unknown user '" + cols[0] + "'");
            u->split = *sp;
        }
    }

    g.canonicalize();
    auto violations = validate(g);
    if (!violations.empty()) {
        std::string msg = "dataset " + dir + " failed validation:";
        for (const auto& v : violations) msg += "\n  - " + v;
        throw DataError(msg);
    }
    return g;
}

void save_dataset(const HeteroGraph& graph, const std::string& dir) {
    HeteroGraph g = graph;
    g.canonicalize();
    fs::create_directories(dir);

    {
        std::ofstream out(fs::path(dir) / "nodes.jsonl");
        auto dump_node = [&](const std::string& id, const char* kind, const auto& inds,
                             const auto& nums, const std::string& desc) {
            json j;
            j["id"] = id;
            j["kind"] = kind;
            j["indicators"] = std::vector<bool>(inds.begin(), inds.end());
            j["numericals"] = std::vector<float>(nums.begin(), nums.end());
            j["description"] = desc;
            out << j.dump() << "\n";
        };
        for (const auto& u : g.users)
            dump_node(u.id, "user", u.indicators, u.numericals, u.description);
        for (const auto& l : g.lists)
            dump_node(l.id, "list", l.indicators, l.numericals, l.description);
    }
    {
        std::ofstream out(fs::path(dir) / "tweets.jsonl");
        auto dump_tweets = [&](const std::string& id, const std::vector<std::string>& tweets) {
            if (tweets.empty()) return;
            json j;
            j["id"] = id;
            j["tweets"] = tweets;
            out << j.dump() << "\n";
        };
        for (const auto& u : g.users) dump_tweets(u.id, u.tweets);
        for (const auto& l : g.lists) dump_tweets(l.id, l.tweets);
    }
    {
        std::ofstream out(fs::path(dir) / "edges.csv");
        out << "src,relation,dst\n";
        for (int r = 0; r < kRelationCount; ++r)
            for (const auto& e : g.edges[r])
                out << e.src << "," << relation_name(static_cast<Relation>(r)) << "," << e.dst
                    << "\n";
    }
    {
        std::ofstream out(fs::path(dir) / "labels.csv");
        out << "id,label\n";
        for (const auto& u : g.users)
            if (u.label) out << u.id << "," << class_name(*u.label) << "\n";
    }
    {
        std::ofstream out(fs::path(dir) / "splits.csv");
        out << "id,split\n";
        for (const auto& u : g.users)
            if (u.split) out << u.id << "," << split_name(*u.split) << "\n";
    }
}

HeteroGraph strip_lists(const HeteroGraph& g) {
    HeteroGraph out;
    out.users = g.users;
    out.edges[static_cast<int>(Relation::following)] = g.edges[static_cast<int>(Relation::following)];
    out.edges[static_cast<int>(Relation::followers)] = g.edges[static_cast<int>(Relation::followers)];
    out.canonicalize();
    return out;
}

}  // namespace sega
