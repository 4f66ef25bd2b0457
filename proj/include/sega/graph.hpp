#pragma once

// Typed heterogeneous user/list graph with five directed relations and raw
// node features. Loading canonicalizes node order (sorted by id) so a dataset
// round-trips to the same in-memory graph regardless of file row order.
//
// Edge direction conventions (the relation name carries the semantics):
//   following, followers : user -> user
//   own, followed        : user -> list
//   membership           : list -> user

#include <array>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace sega {

enum class Relation { following = 0, followers, membership, followed, own };
inline constexpr int kRelationCount = 5;

const char* relation_name(Relation r);
std::optional<Relation> parse_relation(const std::string& name);

enum class NodeKind { user, list };

NodeKind relation_src_kind(Relation r);
NodeKind relation_dst_kind(Relation r);

enum class UserClass { normal = 0, bot = 1, troll = 2 };
enum class Split { train, valid, test };

const char* class_name(UserClass c);
std::optional<UserClass> parse_class(const std::string& name);
const char* split_name(Split s);
std::optional<Split> parse_split(const std::string& name);

inline constexpr int kUserIndicators = 3;   // profile image, protected, verified
inline constexpr int kUserNumericals = 5;   // created_at, name length, followers, followings, tweets
inline constexpr int kListIndicators = 1;   // privacy status
inline constexpr int kListNumericals = 4;   // created_at, name length, followers, members
inline constexpr int kMaxTweets = 20;       // q: most recent tweets kept per node

struct UserRecord {
    std::string id;
    std::array<bool, kUserIndicators> indicators{};
    std::array<float, kUserNumericals> numericals{};
    std::string description;
    std::vector<std::string> tweets;  // most recent last
    std::optional<UserClass> label;
    std::optional<Split> split;

    bool operator==(const UserRecord&) const = default;
};

struct ListRecord {
    std::string id;
    std::array<bool, kListIndicators> indicators{};
    std::array<float, kListNumericals> numericals{};
    std::string description;
    std::vector<std::string> tweets;

    bool operator==(const ListRecord&) const = default;
};

// Edges are stored by node id so invalid graphs stay representable for
// validate(); canonicalize() sorts everything into the canonical order.
struct RawEdge {
    std::string src;
    std::string dst;

    bool operator==(const RawEdge&) const = default;
    auto operator<=>(const RawEdge&) const = default;
};

struct HeteroGraph {
    std::vector<UserRecord> users;
    std::vector<ListRecord> lists;
    std::array<std::vector<RawEdge>, kRelationCount> edges;

    void canonicalize();  // sort users/lists by id and edges by (src, dst)

    int user_count() const { return static_cast<int>(users.size()); }
    int list_count() const { return static_cast<int>(lists.size()); }
    int node_count() const { return user_count() + list_count(); }
    size_t edge_count() const;

    bool operator==(const HeteroGraph&) const = default;
};

struct NodeRef {
    NodeKind kind;
    int index;
};

// Resolved view of a valid graph: id lookup and per-relation adjacency over
// global node indices (users first, then lists). Holds a pointer to the
// graph; the graph must outlive the index.
class GraphIndex {
public:
    static GraphIndex build(const HeteroGraph& g);  // throws DataError if validate() fails

    const HeteroGraph& graph() const { return *g_; }
    int user_count() const { return static_cast<int>(g_->users.size()); }
    int node_count() const { return g_->node_count(); }

    std::optional<NodeRef> find(const std::string& id) const;
    int global_index(NodeRef ref) const {
        return ref.kind == NodeKind::user ? ref.index : user_count() + ref.index;
    }
    const std::string& node_id(int global) const;

    // out-neighbors of `id` under `r`, sorted by id; unknown node -> DataError
    std::vector<std::string> neighbors(const std::string& id, Relation r) const;

    // adjacency over global indices; in_adj[r][i] lists j with edge (j, r, i)
    const std::vector<std::vector<int>>& in_adj(Relation r) const {
        return in_adj_[static_cast<int>(r)];
    }
    const std::vector<std::vector<int>>& out_adj(Relation r) const {
        return out_adj_[static_cast<int>(r)];
    }

private:
    const HeteroGraph* g_ = nullptr;
    std::unordered_map<std::string, NodeRef> by_id_;
    std::array<std::vector<std::vector<int>>, kRelationCount> in_adj_;
    std::array<std::vector<std::vector<int>>, kRelationCount> out_adj_;
};

// Every invariant violation, not just the first.
std::vector<std::string> validate(const HeteroGraph& g);

HeteroGraph load_dataset(const std::string& dir);
void save_dataset(const HeteroGraph& g, const std::string& dir);

// The "w/o list" ablation: drop list nodes and every list-touching relation.
HeteroGraph strip_lists(const HeteroGraph& g);

}  // namespace sega
