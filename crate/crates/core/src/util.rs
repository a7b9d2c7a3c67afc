use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Whitespace token count, used for mock and analytic token accounting.
pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Map `f` over `items` with at most `limit` concurrent workers.
///
/// Results come back in input order regardless of completion order.
pub(crate) fn parallel_map_ordered<T, R, F>(items: &[T], limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = limit.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let out = f(i, &items[i]);
                *slots[i].lock().expect("slot poisoned") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot poisoned").expect("worker filled slot"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_regardless_of_worker_count() {
        let items: Vec<u32> = (0..50).collect();
        let serial = parallel_map_ordered(&items, 1, |_, x| x * 3);
        let parallel = parallel_map_ordered(&items, 8, |_, x| x * 3);
        assert_eq!(serial, parallel);
        assert!(parallel_map_ordered::<u32, u32, _>(&[], 4, |_, x| *x).is_empty());
    }

    #[test]
    fn counts_whitespace_tokens() {
        assert_eq!(whitespace_tokens("  a b\n c\t"), 3);
        assert_eq!(whitespace_tokens(""), 0);
    }
}
