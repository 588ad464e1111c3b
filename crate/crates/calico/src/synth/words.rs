//! Curated word lists for synthetic vocabularies. Sizes are chosen so that
//! prefixes of power-of-four length are available everywhere (the reference
//! executor configuration needs power-of-four symbol groups).

/// Object class nouns (64 = 4^3; valid prefixes: 4, 16, 64).
pub const NOUNS: [&str; 64] = [
    "bag", "girl", "box", "cat", "dog", "chair", "table", "lamp", "cup", "book",
    "car", "bird", "shoe", "hat", "ball", "tree", "boy", "bottle", "plate", "phone",
    "clock", "plant", "sign", "bench", "fence", "door", "window", "bike", "boat", "horse",
    "sheep", "cow", "mug", "bowl", "fork", "spoon", "knife", "towel", "pillow", "blanket",
    "mirror", "vase", "basket", "bucket", "ladder", "broom", "brush", "candle", "jar", "kite",
    "drum", "bell", "rope", "net", "tent", "flag", "crate", "barrel", "cone", "brick",
    "tile", "pipe", "wheel", "rug",
];

/// Color values (16 = 4^2; valid prefixes: 4, 16).
pub const COLORS: [&str; 16] = [
    "black", "white", "red", "blue", "green", "yellow", "brown", "gray",
    "orange", "purple", "pink", "cyan", "beige", "maroon", "olive", "teal",
];

/// Size values (4).
pub const SIZES: [&str; 4] = ["small", "large", "tiny", "huge"];

/// Material values (4).
pub const MATERIALS: [&str; 4] = ["wood", "metal", "plastic", "cloth"];

/// Spatial relationship names (4).
pub const SPATIAL_RELS: [&str; 4] = ["left_of", "right_of", "above", "below"];

/// Semantic relationship names (4).
pub const SEMANTIC_RELS: [&str; 4] = ["holding", "watching", "touching", "facing"];

/// Mixed spatial-semantic relationship names (4).
pub const SPATIAL_SEMANTIC_RELS: [&str; 4] = ["near", "far_from", "inside", "on_top_of"];
