// Offline queue: every recording lands here first and survives page
// reloads until it is SENT. Session metadata (the collection's basic info)
// is stored alongside so sync can create the collection before uploading.

import { ProtocolStep } from './protocol.js';
import { KeyValueStore, base64ToBytes, bytesToBase64 } from './storage.js';

export type ItemState = 'QUEUED' | 'SENDING' | 'SENT' | 'ERROR';

export interface PendingItem {
  collectionId: string;
  step: ProtocolStep;
  wavBytes: Uint8Array;
  state: ItemState;
  attempts: number;
  error?: string;
  queuedAt: string;
}

export interface SessionInfo {
  collectionId: string;
  participantRef: string;
  collectorId: string;
  hospitalCode: string;
  info: Record<string, string>;
}

const ITEM_PREFIX = 'vs.item.';
const SESSION_PREFIX = 'vs.session.';

interface StoredItem {
  collectionId: string;
  step: ProtocolStep;
  wavBase64: string;
  state: ItemState;
  attempts: number;
  error?: string;
  queuedAt: string;
}

export class OfflineQueue {
  constructor(private store: KeyValueStore) {}

  private itemKey(collectionId: string, step: ProtocolStep): string {
    return `${ITEM_PREFIX}${collectionId}.${step}`;
  }

  saveSession(session: SessionInfo): void {
    this.store.setItem(SESSION_PREFIX + session.collectionId, JSON.stringify(session));
  }

  getSession(collectionId: string): SessionInfo | null {
    const raw = this.store.getItem(SESSION_PREFIX + collectionId);
    return raw === null ? null : (JSON.parse(raw) as SessionInfo);
  }

  sessions(): SessionInfo[] {
    return this.store
      .keys()
      .filter((k) => k.startsWith(SESSION_PREFIX))
      .map((k) => JSON.parse(this.store.getItem(k)!) as SessionInfo);
  }

  enqueue(collectionId: string, step: ProtocolStep, wavBytes: Uint8Array): PendingItem {
    const existing = this.get(collectionId, step);
    if (existing && existing.state === 'SENT') {
      return existing; // sent items are immutable
    }
    const item: PendingItem = {
      collectionId,
      step,
      wavBytes,
      state: 'QUEUED',
      attempts: existing ? existing.attempts : 0,
      queuedAt: existing ? existing.queuedAt : new Date().toISOString(),
    };
    this.persist(item);
    return item;
  }

  get(collectionId: string, step: ProtocolStep): PendingItem | null {
    const raw = this.store.getItem(this.itemKey(collectionId, step));
    if (raw === null) return null;
    return this.hydrate(JSON.parse(raw) as StoredItem);
  }

  list(): PendingItem[] {
    return this.store
      .keys()
      .filter((k) => k.startsWith(ITEM_PREFIX))
      .map((k) => this.hydrate(JSON.parse(this.store.getItem(k)!) as StoredItem))
      .sort((a, b) => a.queuedAt.localeCompare(b.queuedAt));
  }

  pending(): PendingItem[] {
    return this.list().filter((item) => item.state !== 'SENT');
  }

  update(item: PendingItem, state: ItemState, error?: string): PendingItem {
    if (item.state === 'SENT') return item;
    const next: PendingItem = {
      ...item,
      state,
      error,
      attempts: state === 'SENDING' ? item.attempts + 1 : item.attempts,
    };
    this.persist(next);
    return next;
  }

  private persist(item: PendingItem): void {
    const doc: StoredItem = {
      collectionId: item.collectionId,
      step: item.step,
      wavBase64: bytesToBase64(item.wavBytes),
      state: item.state,
      attempts: item.attempts,
      error: item.error,
      queuedAt: item.queuedAt,
    };
    this.store.setItem(this.itemKey(item.collectionId, item.step), JSON.stringify(doc));
  }

  private hydrate(doc: StoredItem): PendingItem {
    return {
      collectionId: doc.collectionId,
      step: doc.step,
      wavBytes: base64ToBytes(doc.wavBase64),
      state: doc.state,
      attempts: doc.attempts,
      error: doc.error,
      queuedAt: doc.queuedAt,
    };
  }
}
