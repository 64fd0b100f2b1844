//! Database indexing, ranking modes and evaluation metrics.

pub mod gps;
mod index;
pub mod metrics;
pub mod pq;
mod ranking;

pub use gps::{haversine, simulate_gps, GeoPoint};
pub use index::{DatabaseIndex, ImageId, IndexedImage, InvertedFile};
pub use metrics::{average_precision, mean_average_precision, mean_ndcg, ndcg, rank_of, recall_at};
pub use pq::{train_pq, PqCodebooks};
pub use ranking::{
    rank_adc, rank_bow, rank_bow_inverted, rank_gps, rank_hamming, rank_vlad, Adc, BowL1, BowL1Inverted, Gps,
    Hamming, Query, Ranked, Ranking, RankingMode, RankingRegistry, VladL2,
};
