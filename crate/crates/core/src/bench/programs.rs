//! Guest programs shipped with the crate.

pub struct Program {
    pub name: &'static str,
    pub source: &'static str,
}

macro_rules! guest {
    ($dir:literal, $name:literal, $file:literal) => {
        Program { name: $name, source: include_str!(concat!("../../guest/", $dir, "/", $file)) }
    };
}

pub const BENCH: [Program; 5] = [
    guest!("bench", "treeadd-mini", "treeadd.mcc"),
    guest!("bench", "list-mini", "list.mcc"),
    guest!("bench", "bisort-mini", "bisort.mcc"),
    guest!("bench", "graph-relax-mini", "graph_relax.mcc"),
    guest!("bench", "qsort-marshal-mini", "qsort_marshal.mcc"),
];

pub const BUGS: [Program; 15] = [
    guest!("bugs", "heap_uaf_read", "heap_uaf_read.mcc"),
    guest!("bugs", "heap_uaf_write", "heap_uaf_write.mcc"),
    guest!("bugs", "stack_escape", "stack_escape.mcc"),
    guest!("bugs", "vla_escape", "vla_escape.mcc"),
    guest!("bugs", "double_free", "double_free.mcc"),
    guest!("bugs", "double_free_alias", "double_free_alias.mcc"),
    guest!("bugs", "interior_free", "interior_free.mcc"),
    guest!("bugs", "free_global", "free_global.mcc"),
    guest!("bugs", "stale_after_reuse", "stale_after_reuse.mcc"),
    guest!("bugs", "dangling_field_addr", "dangling_field_addr.mcc"),
    guest!("bugs", "list_uaf", "list_uaf.mcc"),
    guest!("bugs", "stored_pointer_uaf", "stored_pointer_uaf.mcc"),
    guest!("bugs", "tree_uaf", "tree_uaf.mcc"),
    guest!("bugs", "array_elem_uaf", "array_elem_uaf.mcc"),
    guest!("bugs", "marshal_forged", "marshal_forged.mcc"),
];

pub const CLEAN: [Program; 5] = [
    guest!("clean", "strings", "strings.mcc"),
    guest!("clean", "frames", "frames.mcc"),
    guest!("clean", "vla", "vla.mcc"),
    guest!("clean", "globals", "globals.mcc"),
    guest!("clean", "churn", "churn.mcc"),
];

pub mod micro {
    use super::Program;

    pub const DEREF: Program = guest!("micro", "deref", "deref.mcc");
    pub const HINT_LOOP: Program = guest!("micro", "hint_loop", "hint_loop.mcc");
    pub const FAT_ARRAY: Program = guest!("micro", "fat_array", "fat_array.mcc");
    pub const MANY_KEYS: Program = guest!("micro", "many_keys", "many_keys.mcc");
    pub const BIG: Program = guest!("micro", "big", "big.mcc");
}

pub fn find(name: &str) -> Option<&'static Program> {
    BENCH.iter().chain(&BUGS).chain(&CLEAN).find(|p| p.name == name)
}
