//! Reads a CoNLL-U sentence, splits it into wordpieces and prints the
//! graph the syntax encoder attends over.
//!
//! cargo run --example dependency_graph

use sfl::treebank::{build_wordpiece_graph, read_conllu, tokenize, Vocab};

const SENTENCE: &str = "\
# text = The shipping agent sails tomorrow
1\tThe\tthe\tDET\t_\t_\t3\tdet\t_\t_
2\tshipping\tshipping\tNOUN\t_\t_\t3\tcompound\t_\t_
3\tagent\tagent\tNOUN\t_\t_\t4\tnsubj\t_\t_
4\tsails\tsail\tVERB\t_\t_\t0\troot\t_\t_
5\ttomorrow\ttomorrow\tNOUN\t_\t_\t4\tobl:tmod\t_\t_
";

fn main() -> sfl::Result<()> {
    let sentence = read_conllu(SENTENCE)?.remove(0);
    let vocab = Vocab::from_pieces([
        "[PAD]", "[UNK]", "[BOS]", "The", "ship", "##ping", "agent", "sail", "##s", "tom", "##orr", "##o",
    ])?;
    let t = tokenize(&sentence.tokens, &vocab);
    println!("tokens     {:?}", sentence.tokens);
    println!("wordpieces {:?} ({} unknown)", t.pieces, t.unknown);

    let graph = build_wordpiece_graph(&sentence.tree, &t.alignment)?;
    for i in 0..graph.len() {
        let neighbours: Vec<String> = graph
            .neighbors(i)
            .iter()
            .zip(graph.origins(i))
            .map(|(&j, o)| format!("{}({o:?})", t.pieces[j]))
            .collect();
        println!("{:>10} -> {}", t.pieces[i], neighbours.join(" "));
    }
    let root = sentence.tree.root();
    let dist = graph.distances_from(t.alignment[root].start);
    println!("hops from {:?}: {dist:?}", sentence.tokens[root]);
    Ok(())
}
