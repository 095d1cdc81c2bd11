//! Turns travel probabilities between locations into the dissimilarity
//! matrix the embedding consumes: each directed hop costs 1 - ln p, routes
//! take the cheapest path, and the two directions are averaged. Locations
//! are then pooled into regions by the closest member pair.
//!
//! Run with `cargo run --example effective_distance`.

use phylomds::net::{aggregate_to_groups, effective_distance, TravelNetwork};

fn main() -> phylomds::Result<()> {
    // A hub with two spokes and a weak long-range link. Probabilities are
    // per-source and may sum to less than one (travelers can stay put).
    let edges = [
        ("hub", "north", 0.30),
        ("north", "hub", 0.60),
        ("hub", "south", 0.45),
        ("south", "hub", 0.70),
        ("north", "remote", 0.02),
        ("remote", "north", 0.05),
    ];
    let triples: Vec<(String, String, f64)> = edges
        .iter()
        .map(|(a, b, p)| (a.to_string(), b.to_string(), *p))
        .collect();
    let network = TravelNetwork::from_labeled_edges(&triples)?;

    let labels = network.labels().to_vec();
    let distances = effective_distance(&network)?;
    println!("effective distances (symmetrized shortest paths):");
    print!("{:>8}", "");
    for l in &labels {
        print!("{l:>9}");
    }
    println!();
    for i in 0..labels.len() {
        print!("{:>8}", labels[i]);
        for j in 0..labels.len() {
            if i == j {
                print!("{:>9}", "0");
            } else {
                print!("{:>9.3}", distances.value(i, j));
            }
        }
        println!();
    }
    println!();
    println!("note: 'remote' sits far from everything because both of its");
    println!("link probabilities are small, even though it is one hop away.");

    // Pool the two spokes into one region; the region distance is the
    // minimum over member pairs.
    let group_of = |l: &str| -> usize {
        match l {
            "north" | "south" => 0,
            "hub" => 1,
            _ => 2,
        }
    };
    let assignment: Vec<usize> = labels.iter().map(|l| group_of(l)).collect();
    let grouped = aggregate_to_groups(&distances, &assignment, 3)?;
    let names = ["spokes", "hub", "remote"];
    println!();
    println!("grouped (minimum member distance):");
    for i in 1..names.len() {
        for j in 0..i {
            println!("  {} <-> {}: {:.3}", names[i], names[j], grouped.value(i, j));
        }
    }
    Ok(())
}
