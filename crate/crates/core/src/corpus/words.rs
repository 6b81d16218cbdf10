use rand::Rng;

const WORDS: &[&str] = &[
    "the", "of", "and", "to", "in", "is", "for", "that", "with", "on", "as", "was", "by", "at",
    "from", "this", "be", "or", "an", "are", "which", "text", "page", "image", "screen", "novel",
    "chapter", "story", "reader", "price", "member", "access", "content", "private", "paid",
    "document", "archive", "library", "market", "report", "annual", "review", "policy", "public",
    "secret", "value", "number", "system", "online", "website", "article", "section", "table",
    "figure", "result", "method", "model", "letter", "window", "river", "mountain", "garden",
    "winter", "summer", "morning", "evening", "silver", "golden", "quiet", "bright", "simple",
    "strong", "gentle", "hidden", "ancient", "modern", "little", "people", "country", "history",
    "question", "answer", "journey", "village", "kingdom", "harbor", "station", "picture",
    "copyright", "protect", "license", "author", "publish", "edition", "volume", "paragraph",
    "sentence", "between", "through", "because", "without", "another", "however", "together",
    "several", "different", "important", "possible", "general", "special", "nothing", "always",
    "before", "after", "during", "under", "over", "above", "below", "around", "across", "toward",
    "thinking", "writing", "reading", "walking", "looking", "waiting", "quickly", "slowly",
    "jumped", "zebra", "quartz", "oxygen", "jazz", "wax", "fjord", "vex", "knight", "yacht",
];

const CAPITALIZED: f64 = 0.15;
const NUMERIC: f64 = 0.05;

pub fn random_word<R: Rng>(rng: &mut R) -> String {
    if rng.gen_bool(NUMERIC) {
        let digits = rng.gen_range(1..=4);
        return (0..digits)
            .map(|_| char::from(b'0' + rng.gen_range(0..10u8)))
            .collect();
    }
    let w = WORDS[rng.gen_range(0..WORDS.len())];
    let mut s = w.to_string();
    if rng.gen_bool(CAPITALIZED) {
        let first = s.remove(0).to_ascii_uppercase();
        s.insert(0, first);
    }
    let r = rng.gen::<f64>();
    if r < 0.06 {
        s.push('.');
    } else if r < 0.1 {
        s.push(',');
    }
    s
}
